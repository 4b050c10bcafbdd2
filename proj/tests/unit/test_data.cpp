#include <gtest/gtest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sdfc/data.hpp"

using namespace sdfc;

namespace {

void push_be32(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back((v >> 24) & 0xff);
    out.push_back((v >> 16) & 0xff);
    out.push_back((v >> 8) & 0xff);
    out.push_back(v & 0xff);
}

std::string write_bytes(const std::string& name, const std::vector<unsigned char>& bytes) {
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    return path.string();
}

/* Hand-built IDX pair: 2 images of 28x28, first all-zero except pixel (0,0)
 * = 255 and (27,27) = 128; second a gradient row. Labels 3 and 7. */
struct IdxFixture {
    std::string images, labels;
    IdxFixture() {
        std::vector<unsigned char> img;
        push_be32(img, 0x00000803);
        push_be32(img, 2);
        push_be32(img, 28);
        push_be32(img, 28);
        std::vector<unsigned char> pix(784, 0);
        pix[0] = 255;
        pix[783] = 128;
        img.insert(img.end(), pix.begin(), pix.end());
        for (int i = 0; i < 784; ++i) img.push_back(static_cast<unsigned char>(i % 256));
        images = write_bytes("sdfc_idx_images", img);

        std::vector<unsigned char> lab;
        push_be32(lab, 0x00000801);
        push_be32(lab, 2);
        lab.push_back(3);
        lab.push_back(7);
        labels = write_bytes("sdfc_idx_labels", lab);
    }
};

}  // namespace

TEST(Teacher, SameSeedSameData) {
    TeacherSpec spec;
    const Dataset a = generate_student_teacher(spec, 20, 9, false, 5);
    const Dataset b = generate_student_teacher(spec, 20, 9, false, 5);
    ASSERT_EQ(a.train.size(), 20u);
    for (size_t i = 0; i < a.train.size(); ++i) {
        EXPECT_EQ((a.train[i].x - b.train[i].x).norm(), 0.0);
        EXPECT_EQ((a.train[i].target - b.train[i].target).norm(), 0.0);
    }
}

TEST(Teacher, ZeroGainProducesBiasTargets) {
    TeacherSpec spec;
    spec.gain = 0.0;  // all weights zero, biases zero: every target is zero
    const Dataset ds = generate_student_teacher(spec, 10, 2, false, 2);
    for (const auto& s : ds.train) EXPECT_EQ(s.target.norm(), 0.0);
}

TEST(Teacher, TargetVarianceEnvelope) {
    TeacherSpec spec;  // default 30-10-10-10-5
    const Dataset ds = generate_student_teacher(spec, 10000, 3, false, 10);
    const int k = int(ds.train.front().target.size());
    for (int j = 0; j < k; ++j) {
        double sum = 0, sum2 = 0;
        for (const auto& s : ds.train) {
            sum += s.target[j];
            sum2 += s.target[j] * s.target[j];
        }
        const double mean = sum / double(ds.train.size());
        const double var = sum2 / double(ds.train.size()) - mean * mean;
        EXPECT_GT(var, 0.1) << "output dim " << j;
        EXPECT_LT(var, 10.0) << "output dim " << j;
    }
}

TEST(Teacher, HeldoutSplitsAreDistinct) {
    TeacherSpec spec;
    const Dataset ds = generate_student_teacher(spec, 50, 11, false, 25);
    EXPECT_EQ(ds.val.size(), 25u);
    EXPECT_EQ(ds.test.size(), 25u);
    EXPECT_GT((ds.train[0].x - ds.val[0].x).norm(), 0.0);
    EXPECT_GT((ds.val[0].x - ds.test[0].x).norm(), 0.0);
}

TEST(Teacher, RegeneratedEpochsAreFreshDraws) {
    TeacherSpec spec;
    Dataset ds = generate_student_teacher(spec, 15, 13, true, 5);
    const Batch e1 = ds.epoch_train(1);
    const Batch e2 = ds.epoch_train(2);
    const Batch e1_again = ds.epoch_train(1);
    ASSERT_EQ(e1.size(), 15u);
    EXPECT_GT((e1[0].x - e2[0].x).norm(), 0.0);                // fresh draw per epoch
    EXPECT_EQ((e1[0].x - e1_again[0].x).norm(), 0.0);          // but reproducible
    EXPECT_EQ((ds.epoch_train(0)[0].x - ds.train[0].x).norm(), 0.0);
}

TEST(LoadIdx, FixtureRoundTrips) {
    IdxFixture fx;
    const Batch batch = load_idx(fx.images, fx.labels);
    ASSERT_EQ(batch.size(), 2u);
    EXPECT_EQ(batch[0].label, 3);
    EXPECT_EQ(batch[1].label, 7);
    ASSERT_EQ(batch[0].x.size(), 784);
    EXPECT_DOUBLE_EQ(batch[0].x[0], 1.0);
    EXPECT_DOUBLE_EQ(batch[0].x[1], 0.0);
    EXPECT_DOUBLE_EQ(batch[0].x[783], 128.0 / 255.0);
    EXPECT_DOUBLE_EQ(batch[1].x[300], double(300 % 256) / 255.0);
    // targets are left unshaped; the harness fills them per loss kind
    EXPECT_EQ(batch[0].target.size(), 0);
}

TEST(LoadIdx, CorruptMagicReportsOffsetZero) {
    IdxFixture fx;
    std::vector<unsigned char> img;
    push_be32(img, 0x00000804);  // wrong magic
    push_be32(img, 0);
    push_be32(img, 28);
    push_be32(img, 28);
    const std::string bad = write_bytes("sdfc_idx_badmagic", img);
    try {
        load_idx(bad, fx.labels);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset, 0u);
    }
}

TEST(LoadIdx, TruncatedPayloadNamesOffset) {
    IdxFixture fx;
    std::vector<unsigned char> img;
    push_be32(img, 0x00000803);
    push_be32(img, 2);
    push_be32(img, 28);
    push_be32(img, 28);
    for (int i = 0; i < 784 + 100; ++i) img.push_back(0);  // second image cut short
    const std::string bad = write_bytes("sdfc_idx_truncated", img);
    try {
        load_idx(bad, fx.labels);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset, 16u + 784u + 100u);
    }
}

TEST(LoadIdx, CountMismatchRejected) {
    IdxFixture fx;
    std::vector<unsigned char> lab;
    push_be32(lab, 0x00000801);
    push_be32(lab, 3);  // claims 3 labels against 2 images
    lab.push_back(1);
    lab.push_back(2);
    lab.push_back(3);
    const std::string bad = write_bytes("sdfc_idx_count", lab);
    EXPECT_THROW(load_idx(fx.images, bad), ParseError);
}

TEST(LoadIdx, LabelOutOfRangeRejected) {
    IdxFixture fx;
    std::vector<unsigned char> lab;
    push_be32(lab, 0x00000801);
    push_be32(lab, 2);
    lab.push_back(3);
    lab.push_back(11);  // not a digit class
    const std::string bad = write_bytes("sdfc_idx_badlabel", lab);
    EXPECT_THROW(load_idx(fx.images, bad), ParseError);
}

TEST(ValidationSplit, TakesTailOfTrain) {
    TeacherSpec spec;
    Dataset ds = generate_student_teacher(spec, 30, 17, false, 5);
    const Vec tail_first = ds.train[20].x;
    apply_validation_split(ds, 10);
    EXPECT_EQ(ds.train.size(), 20u);
    EXPECT_EQ(ds.val.size(), 10u);
    EXPECT_EQ((ds.val[0].x - tail_first).norm(), 0.0);
    Dataset tiny = generate_student_teacher(spec, 4, 17, false, 2);
    EXPECT_THROW(apply_validation_split(tiny, 4), ConfigError);
}
