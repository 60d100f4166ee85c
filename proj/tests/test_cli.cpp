#include <doctest.h>

#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "maxmin/data.hpp"
#include "support.hpp"

using maxmin::test::TempDir;

namespace {

struct Run {
    int code;
    std::string out;
};

Run run(const std::string& args, const std::filesystem::path& scratch) {
    const auto log = scratch / "cli_output.txt";
    const std::string cmd = std::string(MAXMIN_CLI) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    std::ifstream f(log);
    std::stringstream ss;
    ss << f.rdbuf();
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

std::string read_file(const std::filesystem::path& p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, sep);) out.push_back(item);
    if (!s.empty() && s.back() == sep) out.push_back("");
    return out;
}

void write_synthetic_cifar(const std::filesystem::path& root) {
    std::filesystem::create_directories(root);
    auto make = [](std::size_t n, std::uint64_t seed) {
        maxmin::LabeledImages d{maxmin::test::random_tensor<float>({n, 3, 32, 32}, seed, 0, 1),
                                std::vector<int>(n)};
        for (std::size_t i = 0; i < n; ++i) d.labels[i] = int((i * 3 + seed) % 10);
        for (auto& v : d.images.data()) v = std::round(v * 255.0f) / 255.0f;
        return d;
    };
    for (int i = 1; i <= 5; ++i) {
        maxmin::save_cifar10(make(20, i), root / ("data_batch_" + std::to_string(i) + ".bin"));
    }
    maxmin::save_cifar10(make(20, 9), root / "test_batch.bin");
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
    TempDir dir("cli_usage");
    CHECK(run("", dir.path).code == 2);
    CHECK(run("params --no-such-flag", dir.path).code == 2);
    CHECK(run("params --arch resnet", dir.path).code == 2);
    CHECK(run("frobnicate", dir.path).code == 2);
    const auto r = run("train --dataset mnist --filters 0,32,64 --out " + dir.path.string(), dir.path);
    CHECK(r.code == 2);
    CHECK(contains(r.out, "filter"));
    CHECK(run("params --dataset mnist --filters 1,2", dir.path).code == 2);
    CHECK(run("params --dataset mnist --boost", dir.path).code == 2);
    CHECK(run("--help", dir.path).code == 0);
}

TEST_CASE("params prints per-layer counts") {
    TempDir dir("cli_params");
    const auto r = run("params --dataset cifar10 --arch baseline", dir.path);
    CHECK(r.code == 0);
    CHECK(contains(r.out, "resolved config: {"));
    CHECK(contains(r.out, "conv1"));
    CHECK(contains(r.out, " 2432 "));
    CHECK(contains(r.out, "145578"));
    const auto m = run("params --dataset mnist --arch baseline", dir.path);
    CHECK(contains(m.out, " 1664 "));
}

TEST_CASE("gradcheck on the maxmin mnist preset") {
    TempDir dir("cli_grad");
    const auto r = run("gradcheck --arch maxmin --dataset mnist --samples 40", dir.path);
    INFO(r.out);
    CHECK(r.code == 0);
    CHECK(contains(r.out, "\"tolerance\":0.0001"));
}

TEST_CASE("missing data exits with 3 and says how to fetch it") {
    TempDir dir("cli_nodata");
    const auto r = run("train --dataset cifar10 --data-dir " + (dir.path / "absent").string() +
                           " --out " + (dir.path / "out").string(),
                       dir.path);
    CHECK(r.code == 3);
    CHECK(contains(r.out, "cifar-10-binary.tar.gz"));
}

TEST_CASE("train, eval and compare on synthetic cifar-10") {
    TempDir dir("cli_cifar");
    write_synthetic_cifar(dir.path / "cifar-10-batches-bin");
    const std::string common = " --dataset cifar10 --data-dir " + dir.path.string() +
                               " --val-size 20 --test-limit 20 --seed 3";
    const auto out = dir.path / "run";
    const auto t = run("train --arch maxmin --filters 4,4,8 --epochs 2 --batch-size 16" + common +
                           " --out " + out.string(),
                       dir.path);
    INFO(t.out);
    REQUIRE(t.code == 0);
    CHECK(contains(t.out, "resolved config"));
    const auto metrics = read_file(out / "metrics.csv");
    CHECK(contains(metrics, "epoch,train_loss,train_acc,val_acc,test_acc,lr,seconds"));
    std::vector<std::string> lines = split(metrics, '\n');
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    const auto last = split(lines.back(), ',');
    REQUIRE(last.size() == 7);

    const auto e = run("eval --arch maxmin --filters 4,4,8 --weights " + (out / "final.weights").string() +
                           common,
                       dir.path);
    INFO(e.out);
    CHECK(e.code == 0);
    CHECK(contains(e.out, "test_acc " + last[4] + "\n"));

    const auto wrong = run("eval --arch baseline --filters 4,4,8 --weights " +
                               (out / "final.weights").string() + common,
                           dir.path);
    CHECK(wrong.code == 3);

    const std::string compare = "compare --budgets 4:4:8,8:8:16 --epochs 1 --batch-size 16" + common;
    const auto c1 = run(compare + " --out " + (dir.path / "c1").string(), dir.path);
    INFO(c1.out);
    REQUIRE(c1.code == 0);
    const auto c2 = run(compare + " --out " + (dir.path / "c2").string(), dir.path);
    REQUIRE(c2.code == 0);
    const auto table = read_file(dir.path / "c1" / "compare.csv");
    CHECK(table == read_file(dir.path / "c2" / "compare.csv"));
    auto rows = split(table, '\n');
    while (!rows.empty() && rows.back().empty()) rows.pop_back();
    REQUIRE(rows.size() == 3);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto cols = split(rows[i], ',');
        REQUIRE(cols.size() == 4);
        const double base = std::stod(cols[0]), mm = std::stod(cols[1]);
        CHECK(std::abs(mm - base) <= 0.15 * base);
    }
}

TEST_CASE("divergence exits with 4") {
    TempDir dir("cli_div");
    write_synthetic_cifar(dir.path / "cifar-10-batches-bin");
    const auto r = run("train --dataset cifar10 --arch baseline --filters 4,4,8 --epochs 3 --lr 1e9 "
                       "--val-size 20 --test-limit 20 --data-dir " +
                           dir.path.string() + " --out " + (dir.path / "out").string(),
                       dir.path);
    INFO(r.out);
    CHECK(r.code == 4);
    CHECK(contains(r.out, "epoch"));
}

TEST_CASE("mnist run when the data is present") {
    if (!maxmin::test::have_mnist()) {
        MESSAGE("MNIST not found; skipped");
        return;
    }
    TempDir dir("cli_mnist");
    const auto r = run("train --dataset mnist --arch maxmin --filters 4,4,4 --epochs 1 --train-limit 200 "
                       "--val-size 100 --test-limit 100 --data-dir " +
                           maxmin::test::data_dir().string() + " --out " + dir.path.string(),
                       dir.path);
    INFO(r.out);
    CHECK(r.code == 0);
    CHECK(contains(r.out, "train 200, val 100, test 100"));
    CHECK(std::filesystem::exists(dir.path / "final.weights"));
}
