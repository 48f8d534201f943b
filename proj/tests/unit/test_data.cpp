#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "lorasc/data/corrupt.hpp"
#include "lorasc/data/dataset.hpp"
#include "lorasc/data/generators.hpp"
#include "lorasc/data/table.hpp"
#include "lorasc/errors.hpp"
#include "lorasc/numkit/svd.hpp"
#include "oracles.hpp"

using namespace lorasc;

namespace {

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

// Least squares map M minimizing ||X M^T - Y|| via the normal equations,
// solved with plain Gauss-Jordan elimination.
std::vector<std::vector<double>> least_squares(const MatrixD& x, const MatrixD& y) {
    const std::size_t k = x.cols(), d = y.cols();
    std::vector<std::vector<double>> a(k, std::vector<double>(k + d, 0.0));
    for (std::size_t n = 0; n < x.rows(); ++n)
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = 0; j < k; ++j) a[i][j] += x(n, i) * x(n, j);
            for (std::size_t j = 0; j < d; ++j) a[i][k + j] += x(n, i) * y(n, j);
        }
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < k; ++r)
            if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
        std::swap(a[c], a[piv]);
        for (std::size_t r = 0; r < k; ++r) {
            if (r == c) continue;
            const double f = a[r][c] / a[c][c];
            for (std::size_t j = c; j < k + d; ++j) a[r][j] -= f * a[c][j];
        }
    }
    std::vector<std::vector<double>> m(d, std::vector<double>(k));
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < d; ++j) m[j][i] = a[i][k + j] / a[i][i];
    return m;
}

}  // namespace

TEST(Teacher, ZeroInputZeroNoiseGivesZeroTarget) {
    auto t = make_teacher(1, 6, 4, 2);
    Dataset d;
    d.inputs = MatrixD(1, 6);
    auto y = matmul_nt(d.inputs, t);
    EXPECT_EQ(max_abs(y), 0.0);
    auto data = gen_teacher_student(1, 50, 6, 4, 2, 0.0);
    for (std::size_t n = 0; n < data.size(); ++n) {
        MatrixD xr(1, 6);
        for (std::size_t j = 0; j < 6; ++j) xr(0, j) = data.inputs(n, j);
        auto yr = matmul_nt(xr, t);
        for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(yr(0, j), data.targets(n, j), 1e-12);
    }
}

TEST(Teacher, RecoveredMapHasTeacherRank) {
    for (std::size_t k : {1, 2, 4}) {
        auto data = gen_teacher_student(7, 2000, 8, 6, k, 0.0);
        auto m = least_squares(data.inputs, data.targets);
        MatrixD mm(6, 8);
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t j = 0; j < 8; ++j) mm(i, j) = m[i][j];
        auto sv = singular_values(mm);
        std::size_t rank = 0;
        for (double v : sv) rank += v > 1e-6 * sv[0];
        EXPECT_EQ(rank, k);
    }
}

TEST(Teacher, DeterministicAndRankChecked) {
    EXPECT_TRUE(bit_equal(gen_teacher_student(3, 40, 5, 3, 2, 0.4), gen_teacher_student(3, 40, 5, 3, 2, 0.4)));
    EXPECT_FALSE(bit_equal(gen_teacher_student(3, 40, 5, 3, 2, 0.4), gen_teacher_student(4, 40, 5, 3, 2, 0.4)));
    EXPECT_THROW(gen_teacher_student(3, 40, 5, 3, 4, 0.4), ArgumentError);
    EXPECT_THROW(gen_teacher_student(3, 40, 5, 3, 0, 0.4), ArgumentError);
}

TEST(Teacher, ShiftIsRelatedButDifferent) {
    auto base = make_teacher(1, 8, 4, 3);
    auto shifted = shift_teacher(base, 2, 2, 0.5);
    EXPECT_NEAR(frobenius_norm(sub(shifted, base)) / frobenius_norm(base), 0.5, 1e-12);
    EXPECT_TRUE(bit_equal(shift_teacher(base, 2, 2, 0.0), base));
}

TEST(Sequence, AllSameTokenIsItsClass) {
    auto d = gen_sequence_task(1, 500, 7, 4, SequenceKind::Majority);
    for (std::size_t n = 0; n < d.size(); ++n) {
        std::map<int, int> count;
        for (std::size_t j = 0; j < 7; ++j) count[static_cast<int>(d.inputs(n, j))]++;
        int best = -1, best_n = -1;
        bool tie = false;
        for (auto [tok, c] : count) {
            if (c > best_n) best = tok, best_n = c, tie = false;
            else if (c == best_n) tie = true;
        }
        ASSERT_FALSE(tie);
        ASSERT_EQ(best, d.labels[n]);
        if (best_n == 7) EXPECT_EQ(d.labels[n], static_cast<int>(d.inputs(n, 0)));
    }
}

TEST(Sequence, ModSumLabels) {
    auto d = gen_sequence_task(2, 200, 5, 6, SequenceKind::ModSum);
    for (std::size_t n = 0; n < d.size(); ++n) {
        int s = 0;
        for (std::size_t j = 0; j < 5; ++j) s += static_cast<int>(d.inputs(n, j));
        EXPECT_EQ(d.labels[n], s % 6);
    }
}

TEST(Sequence, BalancedAndDeterministic) {
    for (auto kind : {SequenceKind::Majority, SequenceKind::ModSum}) {
        auto d = gen_sequence_task(3, 10000, 6, 5, kind);
        std::vector<int> counts(5, 0);
        for (int l : d.labels) counts[l]++;
        for (int c : counts) EXPECT_NEAR(c, 2000, 200);
        EXPECT_TRUE(bit_equal(d, gen_sequence_task(3, 10000, 6, 5, kind)));
    }
    EXPECT_THROW(gen_sequence_task(1, 10, 4, 1, SequenceKind::Majority), ArgumentError);
    EXPECT_THROW(parse_sequence_kind("palindrome"), ConfigError);
}

TEST(Split, DisjointExhaustiveDeterministic) {
    auto pool = gen_teacher_student(1, 60, 4, 2, 1, 0.1);
    auto s = split_dataset(pool, SplitSpec{30, 10, 20, 9});
    std::set<std::size_t> all;
    for (auto* v : {&s.train_index, &s.val_index, &s.test_index}) all.insert(v->begin(), v->end());
    EXPECT_EQ(all.size(), 60u);
    EXPECT_EQ(s.train.size(), 30u);
    EXPECT_EQ(s.test.size(), 20u);
    for (std::size_t i = 0; i < 10; ++i)
        EXPECT_EQ(s.val.inputs(i, 0), pool.inputs(s.val_index[i], 0));
    auto again = split_dataset(pool, SplitSpec{30, 10, 20, 9});
    EXPECT_EQ(s.train_index, again.train_index);
    EXPECT_THROW(split_dataset(pool, SplitSpec{30, 10, 10, 9}), ArgumentError);
}

TEST(Table, EmptyFileIsEmptyDataset) {
    oracle::TempDir dir("table_empty");
    write_text(dir.path() / "e.jsonl", "");
    auto schema = TableSchema::with_default_columns(TaskKind::Regression, 2, 1, 0);
    EXPECT_TRUE(load_table(dir.path() / "e.jsonl", TableFormat::Jsonl, schema).empty());
    write_text(dir.path() / "e.csv", "");
    EXPECT_TRUE(load_table(dir.path() / "e.csv", TableFormat::Csv, schema).empty());
}

TEST(Table, RoundTripIsExact) {
    oracle::TempDir dir("table_rt");
    auto reg = gen_teacher_student(5, 30, 4, 2, 1, 0.3);
    auto rs = TableSchema::with_default_columns(TaskKind::Regression, 4, 2, 0);
    Dataset cls = reg;
    cls.kind = TaskKind::Classification;
    cls.targets = MatrixD();
    cls.classes = 3;
    for (std::size_t i = 0; i < cls.size(); ++i) cls.labels.push_back(static_cast<int>(i % 3));
    auto cs = TableSchema::with_default_columns(TaskKind::Classification, 4, 0, 3);
    for (auto fmt : {TableFormat::Jsonl, TableFormat::Csv}) {
        auto p = dir.path() / (std::string("r.") + std::string(to_string(fmt)));
        save_table(reg, p, fmt, rs);
        auto back = load_table(p, fmt, rs);
        EXPECT_TRUE(bit_equal(back.inputs, reg.inputs));
        EXPECT_TRUE(bit_equal(back.targets, reg.targets));
        save_table(cls, p, fmt, cs);
        auto lb = load_table(p, fmt, cs);
        EXPECT_TRUE(bit_equal(lb.inputs, cls.inputs));
        EXPECT_EQ(lb.labels, cls.labels);
    }
}

TEST(Table, CsvColumnsFoundByName) {
    oracle::TempDir dir("table_cols");
    write_text(dir.path() / "t.csv", "y0,x1,x0\n5,2,1\n6,4,3\n");
    auto d = load_table(dir.path() / "t.csv", TableFormat::Csv,
                        TableSchema::with_default_columns(TaskKind::Regression, 2, 1, 0));
    EXPECT_EQ(d.inputs, MatrixD::from_rows({{1, 2}, {3, 4}}));
    EXPECT_EQ(d.targets, MatrixD::from_rows({{5}, {6}}));
}

TEST(Table, MalformedRowsReportLine) {
    oracle::TempDir dir("table_bad");
    auto schema = TableSchema::with_default_columns(TaskKind::Regression, 2, 1, 0);
    auto expect_line = [&](const std::string& name, const std::string& text, TableFormat fmt, const char* line) {
        write_text(dir.path() / name, text);
        try {
            load_table(dir.path() / name, fmt, schema);
            FAIL() << name;
        } catch (const IngestionError& e) {
            EXPECT_NE(std::string(e.what()).find(line), std::string::npos) << e.what();
        }
    };
    expect_line("nan.jsonl", "{\"x\":[1,2],\"y\":[3]}\n{\"x\":[NaN,2],\"y\":[3]}\n", TableFormat::Jsonl, "line 2");
    expect_line("nan.csv", "x0,x1,y0\n1,2,3\n4,5,6\nnan,1,2\n", TableFormat::Csv, "line 4");
    expect_line("width.jsonl", "{\"x\":[1],\"y\":[3]}\n", TableFormat::Jsonl, "line 1");
    auto cls = TableSchema::with_default_columns(TaskKind::Classification, 2, 0, 2);
    write_text(dir.path() / "lab.jsonl", "{\"x\":[1,2],\"y\":5}\n");
    EXPECT_THROW(load_table(dir.path() / "lab.jsonl", TableFormat::Jsonl, cls), IngestionError);
    write_text(dir.path() / "miss.csv", "x0,y0\n1,2\n");
    EXPECT_THROW(load_table(dir.path() / "miss.csv", TableFormat::Csv, schema), SchemaError);
    EXPECT_THROW(load_table(dir.path() / "absent.csv", TableFormat::Csv, schema), IoError);
}

TEST(Corrupt, SeverityZeroIsBitIdentical) {
    auto d = gen_teacher_student(1, 40, 5, 2, 1, 0.1);
    for (auto kind : {CorruptionKind::GaussianInput, CorruptionKind::FeatureMask, CorruptionKind::CovariateShift})
        EXPECT_TRUE(bit_equal(corrupt(d, CorruptionSpec{kind, 0.0, 3}), d));
}

TEST(Corrupt, GaussianNoiseStdPerFeature) {
    auto d = gen_teacher_student(1, 10000, 4, 2, 1, 0.1);
    auto copy = d;
    auto c = corrupt(d, CorruptionSpec{CorruptionKind::GaussianInput, 0.7, 5});
    EXPECT_TRUE(bit_equal(d, copy));
    auto added = sub(c.inputs, d.inputs);
    for (std::size_t j = 0; j < 4; ++j) {
        MatrixD col(added.rows(), 1);
        for (std::size_t i = 0; i < added.rows(); ++i) col(i, 0) = added(i, j);
        EXPECT_NEAR(oracle::two_pass_std(col), 0.7, 0.035);
    }
}

TEST(Corrupt, MaskZeroesAboutHalf) {
    auto d = gen_teacher_student(1, 5000, 8, 2, 1, 0.1);
    auto c = corrupt(d, CorruptionSpec{CorruptionKind::FeatureMask, 0.5, 5});
    std::size_t zeros = 0;
    for (double v : c.inputs.values()) zeros += v == 0.0;
    EXPECT_NEAR(static_cast<double>(zeros) / c.inputs.size(), 0.5, 0.02);
}

TEST(Corrupt, ShiftIsOneDirection) {
    auto d = gen_teacher_student(1, 50, 6, 2, 1, 0.1);
    auto c = corrupt(d, CorruptionSpec{CorruptionKind::CovariateShift, 2.0, 5});
    auto diff = sub(c.inputs, d.inputs);
    for (std::size_t i = 1; i < diff.rows(); ++i)
        for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(diff(i, j), diff(0, j), 1e-12);
    double norm = 0;
    for (std::size_t j = 0; j < 6; ++j) norm += diff(0, j) * diff(0, j);
    EXPECT_NEAR(std::sqrt(norm), 2.0, 1e-12);
}

TEST(Corrupt, SequenceKindRestrictions) {
    auto seq = gen_sequence_task(1, 100, 5, 4, SequenceKind::Majority);
    EXPECT_THROW(corrupt(seq, CorruptionSpec{CorruptionKind::GaussianInput, 0.5, 1}), ConfigError);
    auto m = corrupt(seq, CorruptionSpec{CorruptionKind::FeatureMask, 0.3, 1});
    for (double v : m.inputs.values()) EXPECT_EQ(v, std::floor(v));
    EXPECT_EQ(corruption_label(CorruptionSpec{CorruptionKind::FeatureMask, 0.3, 1}), "corrupted:feature_mask:0.3");
}

TEST(DatasetContract, ValidateRejectsBadLabels) {
    Dataset d;
    d.kind = TaskKind::Classification;
    d.inputs = MatrixD(2, 3);
    d.classes = 2;
    d.labels = {0, 2};
    EXPECT_THROW(d.validate(), ArgumentError);
    d.labels = {0};
    EXPECT_THROW(d.validate(), Error);
}
