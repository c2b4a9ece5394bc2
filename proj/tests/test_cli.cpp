#include <fstream>
#include <iterator>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"
#include "sgf/cli.hpp"
#include "sgf/data.hpp"
#include "sgf/segmentation.hpp"

using namespace sgf;
using json = nlohmann::json;

namespace {

struct Outcome {
    int code;
    std::string out, err;
};

Outcome run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t count_lines(const std::string& text) {
    std::size_t n = 0;
    std::istringstream ss(text);
    for (std::string line; std::getline(ss, line);) n += !line.empty();
    return n;
}

/// Small desk-sized dataset with train, val and test entries.
fs::path make_dataset(const std::string& name) {
    const auto dir = testing::scratch_dir(name);
    const auto r = run({"synth", "--out", dir.string(), "--count", "8", "--size", "64", "--seed", "3",
                        "--val-fraction", "0.25", "--test-fraction", "0.25"});
    REQUIRE(r.code == 0);
    return dir;
}

std::vector<std::string> train_args(const fs::path& data, const fs::path& ckpt, const std::string& scheme) {
    return {"train", "--manifest", (data / "manifest.jsonl").string(), "--out", ckpt.string(),
            "--profile", "desk", "--scheme", scheme, "--epochs", "2", "--batch-size", "4", "--seed", "9"};
}

}  // namespace

TEST_CASE("exit codes by error class") {
    CHECK(cli::exit_code_for(ErrorCode::InvalidArgument) == cli::kUsage);
    CHECK(cli::exit_code_for(ErrorCode::UnknownName) == cli::kUsage);
    for (ErrorCode c : {ErrorCode::Io, ErrorCode::MalformedData, ErrorCode::DuplicateEntry,
                        ErrorCode::UnsupportedFormat, ErrorCode::MalformedCheckpoint,
                        ErrorCode::VersionMismatch, ErrorCode::TruncatedCheckpoint, ErrorCode::SchemeMismatch,
                        ErrorCode::ShapeMismatch})
        CHECK(cli::exit_code_for(c) == cli::kData);
    CHECK(cli::exit_code_for(ErrorCode::Invariant) == cli::kInternal);

    CHECK(run({}).code == cli::kUsage);
    CHECK(run({"frobnicate"}).code == cli::kUsage);
    CHECK(run({"synth"}).code == cli::kUsage);
    CHECK(run({"train", "--manifest", "nope.jsonl", "--out", "x.sgf", "--scheme", "bogus"}).code == cli::kUsage);
    const auto missing = run({"train", "--manifest", "nope.jsonl", "--out", "x.sgf"});
    CHECK(missing.code == cli::kData);
    CHECK(missing.err.find("nope.jsonl") != std::string::npos);
    CHECK(run({"--help"}).code == cli::kOk);
}

TEST_CASE("help for every command lists the scheme names") {
    for (const char* cmd : {"synth", "train", "eval", "predict", "ablate", "report"}) {
        const auto r = run({cmd, "--help"});
        CHECK(r.code == 0);
        for (const auto& name : canonical_scheme_names()) CHECK(r.out.find(name) != std::string::npos);
    }
    const auto top = run({"--help"});
    CHECK(top.out.find("cen90") != std::string::npos);
}

TEST_CASE("synth is deterministic and reports unwritable targets") {
    const auto a = testing::scratch_dir("cli_synth_a");
    const auto b = testing::scratch_dir("cli_synth_b");
    for (const auto& dir : {a, b})
        REQUIRE(run({"synth", "--out", dir.string(), "--count", "3", "--seed", "4", "--format", "png"}).code == 0);
    std::size_t files = 0;
    for (const auto& entry : fs::directory_iterator(a)) {
        ++files;
        CHECK(slurp(entry.path()) == slurp(b / entry.path().filename()));
    }
    CHECK(files == 8);
    CHECK(count_lines(slurp(a / "manifest.jsonl")) == 6);

    const auto blocker = testing::scratch_dir("cli_synth_blocked") / "file";
    std::ofstream(blocker) << "x";
    CHECK(run({"synth", "--out", (blocker / "sub").string(), "--count", "2"}).code != 0);
    CHECK(run({"synth", "--out", a.string(), "--count", "0"}).code == cli::kUsage);
}

TEST_CASE("train, eval and predict end to end") {
    const auto data = make_dataset("cli_e2e");
    const auto work = testing::scratch_dir("cli_e2e_out");
    const auto ckpt = work / "v5.sgf";
    const auto r1 = run(train_args(data, ckpt, "v5"));
    REQUIRE_MESSAGE(r1.code == 0, r1.err);
    REQUIRE(fs::exists(ckpt));
    const auto log_path = work / "v5.log.json";
    REQUIRE(fs::exists(log_path));
    const json log = json::parse(slurp(log_path));
    CHECK(log["scheme"] == "v5");
    CHECK(log["epochs"].size() == 2);
    CHECK(log["steps"] == 4);
    const std::string first_log = slurp(log_path);
    const std::string first_ckpt = slurp(ckpt);
    REQUIRE(run(train_args(data, ckpt, "v5")).code == 0);
    CHECK(slurp(log_path) == first_log);
    CHECK(slurp(ckpt) == first_ckpt);

    auto bogus = train_args(data, work / "bogus.sgf", "bogus");
    const auto rb = run(bogus);
    CHECK(rb.code == cli::kUsage);
    CHECK(rb.err.find("v3_h") != std::string::npos);

    const auto report_path = work / "report.json";
    const auto roc_path = work / "roc.csv";
    const auto ev = run({"eval", "--model", ckpt.string(), "--manifest", (data / "manifest.jsonl").string(),
                         "--report", report_path.string(), "--roc-csv", roc_path.string(), "--threshold", "0.5"});
    REQUIRE_MESSAGE(ev.code == 0, ev.err);
    const json report = json::parse(slurp(report_path));
    CHECK(report["count"] == 4);
    CHECK(report["auc"].is_number());
    CHECK(report.contains("accuracy_at_threshold"));
    CHECK(slurp(roc_path).rfind("threshold,fpr,tpr\ninf,0,0\n", 0) == 0);
    CHECK(run({"eval", "--model", ckpt.string(), "--manifest", (data / "manifest.jsonl").string(), "--scheme",
               "v3_h"})
              .code == cli::kData);

    // Single-class split: only the real test images.
    std::vector<ManifestEntry> reals;
    for (const auto& e : load_manifest(data / "manifest.jsonl").split(Split::Test))
        if (e.label == 1) reals.push_back(e);
    write_manifest(work / "reals.jsonl", reals);
    const auto single_report = work / "single.json";
    const auto single = run({"eval", "--model", ckpt.string(), "--manifest", (work / "reals.jsonl").string(),
                             "--report", single_report.string()});
    REQUIRE_MESSAGE(single.code == 0, single.err);
    CHECK(single.err.find("warning") != std::string::npos);
    const json sj = json::parse(slurp(single_report));
    CHECK(sj["auc"].is_null());
    CHECK(sj["warnings"].size() == 1);

    const auto image = load_manifest(data / "manifest.jsonl").entries.front().path;
    const auto plain = run({"predict", "--model", ckpt.string(), "--image", image.string()});
    REQUIRE(plain.code == 0);
    CHECK((plain.out == "REAL\n" || plain.out == "FAKE\n"));
    const auto pj = run({"predict", "--model", ckpt.string(), "--image", image.string(), "--json"});
    REQUIRE(pj.code == 0);
    const json p5 = json::parse(pj.out);
    CHECK(p5["voters"].size() == 5);
    CHECK(p5["tally"]["real"].get<int>() + p5["tally"]["fake"].get<int>() == 5);
    CHECK(p5["scheme"] == "v5");
    CHECK(p5["label"] == plain.out.substr(0, 4));

    const auto ori = work / "ori.sgf";
    REQUIRE(run(train_args(data, ori, "ori")).code == 0);
    const json p1 = json::parse(run({"predict", "--model", ori.string(), "--image", image.string(), "--json"}).out);
    CHECK(p1["voters"].size() == 1);
    CHECK(p1["tally"]["real"].get<int>() + p1["tally"]["fake"].get<int>() == 1);

    std::ofstream(work / "junk.sgf") << "not a checkpoint";
    CHECK(run({"predict", "--model", (work / "junk.sgf").string(), "--image", image.string()}).code == cli::kData);
}

TEST_CASE("ablate and report") {
    const auto data = make_dataset("cli_ablate");
    const auto root = testing::scratch_dir("cli_runs");
    auto ablate = [&](const fs::path& out, const std::string& seed) {
        return run({"ablate", "--manifest", (data / "manifest.jsonl").string(), "--out", out.string(), "--schemes",
                    "ori,v3_h,v5", "--profile", "desk", "--epochs", "1", "--batch-size", "4", "--seed", seed});
    };
    const auto a = ablate(root / "run_a", "1");
    REQUIRE_MESSAGE(a.code == 0, a.err);
    const std::string csv = slurp(root / "run_a" / "ablation.csv");
    CHECK(count_lines(csv) == 4);
    CHECK(csv.rfind("method,val_accuracy_pct,val_auc,test_accuracy_pct,test_auc,status\n", 0) == 0);
    CHECK(csv.find("\nori_Mesonet,") != std::string::npos);
    CHECK(csv.find("\nv3_h,") != std::string::npos);
    CHECK(fs::exists(root / "run_a" / "ablation.md"));
    CHECK(ablate(root / "bad", "1").code == 0);
    CHECK(run({"ablate", "--manifest", (data / "manifest.jsonl").string(), "--out", (root / "x").string(),
               "--schemes", "v5,nope"})
              .code == cli::kUsage);

    const auto one = run({"report", "--in", (root / "run_a").string(), "--format", "csv"});
    REQUIRE(one.code == 0);
    CHECK(count_lines(one.out) == 4);
    CHECK(one.out.find("run_a,v5,") != std::string::npos);

    fs::remove_all(root / "bad");
    REQUIRE(ablate(root / "run_b", "2").code == 0);
    const auto both_csv = run({"report", "--in", root.string(), "--format", "csv"});
    const auto both_md = run({"report", "--in", root.string()});
    REQUIRE(both_csv.code == 0);
    REQUIRE(both_md.code == 0);
    CHECK(count_lines(both_csv.out) == 7);
    CHECK(both_csv.out.find("run_a,v5,") != std::string::npos);
    CHECK(both_csv.out.find("run_b,v5,") != std::string::npos);
    // Every numeric cell of the CSV shows up verbatim in the markdown table.
    std::istringstream rows(both_csv.out);
    std::string line;
    std::getline(rows, line);
    while (std::getline(rows, line)) {
        std::istringstream fields(line);
        for (std::string f; std::getline(fields, f, ',');)
            if (!f.empty()) CHECK(both_md.out.find("| " + f + " |") != std::string::npos);
    }
    CHECK(run({"report", "--in", (root / "empty_nothing").string()}).code == cli::kData);
}
