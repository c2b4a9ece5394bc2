#include "sgf/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "sgf/checkpoint.hpp"
#include "sgf/data.hpp"
#include "sgf/train.hpp"

namespace sgf::cli {

namespace {

using json = nlohmann::ordered_json;

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    require(out.good(), ErrorCode::Io, "cannot write " + path.string());
    out << text;
    require(out.good(), ErrorCode::Io, "failed writing " + path.string());
}

void ensure_parent(const fs::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
}

std::string scheme_footer() { return "Segmentation schemes: " + canonical_scheme_list(); }

/// Flags shared by train and ablate; unset values leave the config untouched.
struct ConfigFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> batch_size;
    std::optional<double> lr;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON file with TrainConfig fields")->check(CLI::ExistingFile);
        cmd->add_option("--seed", seed, "RNG seed for initialisation and shuffling (overrides config)");
        cmd->add_option("--epochs", epochs, "training epochs (overrides config)");
        cmd->add_option("--batch-size", batch_size, "mini-batch size (overrides config)");
        cmd->add_option("--lr", lr, "initial learning rate (overrides config)");
    }

    TrainConfig resolve() const {
        TrainConfig cfg;
        if (!config_path.empty()) cfg = TrainConfig::from_json(read_text(config_path));
        if (seed) cfg.seed = *seed;
        if (epochs) cfg.epochs = *epochs;
        if (batch_size) cfg.batch_size = *batch_size;
        if (lr) cfg.lr = *lr;
        cfg.validate();
        return cfg;
    }
};

std::vector<Sample> load_split(const Manifest& manifest, Split split, std::size_t side, bool required) {
    const auto entries = manifest.split(split);
    if (required)
        require(!entries.empty(), ErrorCode::MalformedData,
                "manifest has no '" + std::string(to_string(split)) + "' entries");
    return load_samples(entries, side);
}

std::string format_metric(const std::optional<double>& v, int digits) {
    return v ? fixed(*v, digits) : std::string("n/a");
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    fs::path out;
    SynthConfig cfg;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
    const Manifest m = generate_synthetic_dataset(a.cfg, a.out);
    out << "wrote " << m.entries.size() << " images and manifest.jsonl to " << a.out.string() << '\n';
    return kOk;
}

struct TrainArgs {
    fs::path manifest, out, log;
    std::string arch = "proposed", scheme = "v5", profile = "full";
    bool shared_heads = false;
    ConfigFlags config;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
    const Architecture arch = parse_architecture(a.arch);
    const SegmentationScheme scheme = parse_scheme(a.scheme);
    const Profile profile = parse_profile(a.profile);
    const TrainConfig cfg = a.config.resolve();

    const Manifest manifest = load_manifest(a.manifest);
    const auto train = load_split(manifest, Split::Train, profile.input_side, true);
    const auto val = load_split(manifest, Split::Val, profile.input_side, true);

    Rng rng(cfg.seed);
    EnsembleModel model = build_model(arch, scheme, profile, rng, a.shared_heads);
    const Rng::State rng_state = rng.state();
    out << "training " << to_string(arch) << " / " << scheme.name() << " / " << profile.name << ": "
        << train.size() << " train, " << val.size() << " val, " << model.parameters().scalar_count()
        << " parameters\n";
    FitResult result = fit(model, train, val, cfg, [&](const EpochLog& e) {
        out << "epoch " << e.epoch << " loss " << fixed(e.train_loss, 6) << " val_acc "
            << format_metric(e.val_acc, 4) << " val_auc " << format_metric(e.val_auc, 4) << '\n';
    });

    model.parameters() = result.best_parameters;
    ensure_parent(a.out);
    save_checkpoint(a.out, model, cfg, result.best_epoch, rng_state);

    fs::path log_path = a.log;
    if (log_path.empty()) log_path = fs::path(a.out).replace_extension(".log.json");
    json log = {{"arch", std::string(to_string(arch))},
                {"scheme", scheme.name()},
                {"profile", profile.name},
                {"config", json::parse(cfg.to_json())},
                {"steps", result.steps},
                {"best_epoch", result.best_epoch},
                {"epochs", json::parse(training_log_json(result.log))}};
    ensure_parent(log_path);
    write_text(log_path, log.dump(2) + "\n");

    const EpochLog& best = result.log[result.best_epoch - 1];
    out << "best epoch " << best.epoch << ": val_acc " << format_metric(best.val_acc, 4) << " val_auc "
        << format_metric(best.val_auc, 4) << '\n';
    out << "checkpoint " << a.out.string() << ", log " << log_path.string() << '\n';
    return kOk;
}

struct EvalArgs {
    fs::path model, manifest, roc_csv, report;
    std::string split = "test";
    std::string scheme;
    std::optional<double> threshold;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
    std::optional<SegmentationScheme> expected;
    if (!a.scheme.empty()) expected = parse_scheme(a.scheme);
    const Split split = parse_split(a.split);
    const Checkpoint ck = load_checkpoint(a.model, expected);
    const EnsembleModel model = restore_model(ck);
    const Manifest manifest = load_manifest(a.manifest);
    const auto samples = load_split(manifest, split, ck.profile.input_side, true);

    const EvalReport report = evaluate(model, samples, a.threshold);
    for (const auto& w : report.warnings) err << "warning: " << w << '\n';
    if (!a.roc_csv.empty()) {
        if (report.roc) {
            ensure_parent(a.roc_csv);
            std::ofstream csv(a.roc_csv);
            require(csv.good(), ErrorCode::Io, "cannot write " + a.roc_csv.string());
            write_roc_csv(csv, *report.roc);
        } else {
            err << "warning: ROC CSV not written, the curve is undefined\n";
        }
    }
    if (!a.report.empty()) {
        ensure_parent(a.report);
        write_text(a.report, report.to_json() + "\n");
    }
    out << "split " << a.split << ": " << report.count << " images, accuracy "
        << fixed(report.accuracy, 4) << ", auc " << format_metric(report.auc, 4) << '\n';
    if (report.optimal_cutoff)
        out << "optimal cutoff " << report.optimal_cutoff->threshold << " (fpr "
            << fixed(report.optimal_cutoff->fpr, 4) << ", tpr " << fixed(report.optimal_cutoff->tpr, 4)
            << ")\n";
    if (report.accuracy_at_threshold)
        out << "accuracy at threshold " << *report.threshold << ": "
            << fixed(*report.accuracy_at_threshold, 4) << '\n';
    return kOk;
}

struct PredictArgs {
    fs::path model, image;
    bool as_json = false;
};

int cmd_predict(const PredictArgs& a, std::ostream& out) {
    const Checkpoint ck = load_checkpoint(a.model);
    const EnsembleModel model = restore_model(ck);
    TensorF image = decode_image(a.image);
    const std::size_t side = ck.profile.input_side;
    if (image.dim(0) != side || image.dim(1) != side) image = resize_bilinear(image, side);
    const VoteResult vote = forward_ensemble(model, image);
    if (!a.as_json) {
        out << to_string(vote.label) << '\n';
        return kOk;
    }
    json voters = json::array();
    for (std::size_t i = 0; i < vote.per_voter.size(); ++i)
        voters.push_back({{"index", i},
                          {"label", std::string(to_string(vote.per_voter[i].label))},
                          {"prob_real", vote.per_voter[i].prob_real}});
    const json doc = {{"label", std::string(to_string(vote.label))},
                      {"scheme", ck.scheme.name()},
                      {"voters", voters},
                      {"tally", {{"real", vote.real_votes}, {"fake", vote.fake_votes}}},
                      {"tiebreak_used", vote.tiebreak_used},
                      {"mean_prob_real", vote.mean_prob_real()}};
    out << doc.dump(2) << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------
// Ablation tables: one row per scheme, an (Accuracy %, AUC) pair per dataset.

struct AblationTable {
    std::vector<std::string> datasets;
    struct Row {
        std::string run;
        std::string method;
        std::map<std::string, std::pair<std::string, std::string>> cells;  // dataset -> (acc %, auc)
        std::string status;
    };
    std::vector<Row> rows;

    std::vector<std::string> header(bool with_run) const {
        std::vector<std::string> h;
        if (with_run) h.push_back("run");
        h.push_back("method");
        for (const auto& d : datasets) {
            h.push_back(d + "_accuracy_pct");
            h.push_back(d + "_auc");
        }
        h.push_back("status");
        return h;
    }

    std::vector<std::string> fields(const Row& r, bool with_run) const {
        std::vector<std::string> f;
        if (with_run) f.push_back(r.run);
        f.push_back(r.method);
        for (const auto& d : datasets) {
            const auto it = r.cells.find(d);
            f.push_back(it == r.cells.end() ? "" : it->second.first);
            f.push_back(it == r.cells.end() ? "" : it->second.second);
        }
        f.push_back(r.status);
        return f;
    }

    std::string csv(bool with_run) const {
        std::string s;
        auto line = [&](const std::vector<std::string>& f) {
            for (std::size_t i = 0; i < f.size(); ++i) s += (i ? "," : "") + f[i];
            s += '\n';
        };
        line(header(with_run));
        for (const auto& r : rows) line(fields(r, with_run));
        return s;
    }

    std::string markdown(bool with_run) const {
        std::string s = "|";
        if (with_run) s += " Run |";
        s += " Method |";
        for (const auto& d : datasets) s += " " + d + " Accuracy (%) | " + d + " AUC |";
        s += " Status |\n|";
        const std::size_t cols = (with_run ? 3 : 2) + 2 * datasets.size();
        for (std::size_t i = 0; i < cols; ++i) s += "---|";
        s += '\n';
        for (const auto& r : rows) {
            s += "|";
            for (const auto& f : fields(r, with_run)) s += " " + (f.empty() ? std::string("-") : f) + " |";
            s += '\n';
        }
        return s;
    }
};

std::vector<std::string> split_list(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(text);
    while (std::getline(ss, item, sep)) {
        const auto b = item.find_first_not_of(" \t\r");
        const auto e = item.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? "" : item.substr(b, e - b + 1));
    }
    return out;
}

AblationTable parse_ablation_csv(const fs::path& path, const std::string& run) {
    std::istringstream in(read_text(path));
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), ErrorCode::MalformedData, "empty " + path.string());
    const auto header = split_list(line, ',');
    require(header.size() >= 2 && header.front() == "method" && header.back() == "status" &&
                (header.size() - 2) % 2 == 0,
            ErrorCode::MalformedData, "unexpected ablation header in " + path.string());
    AblationTable table;
    for (std::size_t i = 1; i + 1 < header.size(); i += 2) {
        const std::string& col = header[i];
        const std::string suffix = "_accuracy_pct";
        require(col.size() > suffix.size() && col.ends_with(suffix), ErrorCode::MalformedData,
                "unexpected ablation column '" + col + "' in " + path.string());
        table.datasets.push_back(col.substr(0, col.size() - suffix.size()));
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_list(line, ',');
        require(f.size() == header.size(), ErrorCode::MalformedData,
                "ablation row has " + std::to_string(f.size()) + " fields in " + path.string());
        AblationTable::Row row{run, f.front(), {}, f.back()};
        for (std::size_t d = 0; d < table.datasets.size(); ++d)
            row.cells[table.datasets[d]] = {f[1 + 2 * d], f[2 + 2 * d]};
        table.rows.push_back(std::move(row));
    }
    return table;
}

struct AblateArgs {
    fs::path manifest, out;
    std::string schemes;
    std::string arch = "mesonet-seg", profile = "full";
    ConfigFlags config;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out, std::ostream& err) {
    const Architecture arch = parse_architecture(a.arch);
    const Profile profile = parse_profile(a.profile);
    const TrainConfig cfg = a.config.resolve();
    std::vector<std::string> names =
        a.schemes.empty() ? canonical_scheme_names() : split_list(a.schemes, ',');
    std::vector<SegmentationScheme> schemes;
    for (const auto& n : names) schemes.push_back(parse_scheme(n));
    require(!schemes.empty(), ErrorCode::InvalidArgument, "ablate: no schemes given");

    const Manifest manifest = load_manifest(a.manifest);
    const auto train = load_split(manifest, Split::Train, profile.input_side, true);
    std::vector<std::pair<std::string, std::vector<Sample>>> eval_sets;
    for (Split s : {Split::Val, Split::Test}) {
        auto samples = load_split(manifest, s, profile.input_side, false);
        if (!samples.empty()) eval_sets.emplace_back(std::string(to_string(s)), std::move(samples));
    }
    require(!eval_sets.empty(), ErrorCode::MalformedData, "ablate: manifest has no val or test entries");

    std::error_code ec;
    fs::create_directories(a.out, ec);
    require(fs::is_directory(a.out), ErrorCode::Io, "cannot create output directory " + a.out.string());

    AblationTable table;
    for (const auto& [name, samples] : eval_sets) table.datasets.push_back(name);
    for (const auto& scheme : schemes) {
        AblationTable::Row row{"", scheme.name(), {}, "ok"};
        try {
            Rng rng(cfg.seed);
            // The unsegmented row is the plain baseline when the architecture has one.
            const Architecture row_arch =
                scheme.kind == SchemeKind::Ori && arch == Architecture::MesonetSeg ? Architecture::Mesonet : arch;
            EnsembleModel model = build_model(row_arch, scheme, profile, rng);
            if (row_arch == Architecture::Mesonet) row.method = "ori_Mesonet";
            const FitResult result = fit(model, train, eval_sets.front().second, cfg);
            model.parameters() = result.best_parameters;
            for (const auto& [name, samples] : eval_sets) {
                const EvalReport r = evaluate(model, samples);
                row.cells[name] = {fixed(100.0 * r.accuracy, 2), r.auc ? fixed(*r.auc, 4) : std::string()};
            }
        } catch (const std::exception& e) {
            std::string msg = e.what();
            std::replace(msg.begin(), msg.end(), ',', ';');
            std::replace(msg.begin(), msg.end(), '\n', ' ');
            row.status = "failed: " + msg;
            err << "scheme " << scheme.name() << " failed: " << e.what() << '\n';
        }
        out << row.method;
        for (const auto& d : table.datasets)
            if (row.cells.count(d)) out << "  " << d << " acc " << row.cells[d].first << "% auc " << row.cells[d].second;
        if (row.status != "ok") out << "  " << row.status;
        out << '\n';
        table.rows.push_back(std::move(row));
    }
    write_text(a.out / "ablation.csv", table.csv(false));
    write_text(a.out / "ablation.md", table.markdown(false));
    out << "wrote " << (a.out / "ablation.csv").string() << " and ablation.md\n";
    return kOk;
}

struct ReportArgs {
    fs::path in;
    std::string format = "md";
};

int cmd_report(const ReportArgs& a, std::ostream& out) {
    require(fs::is_directory(a.in), ErrorCode::Io, "report: not a directory: " + a.in.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(a.in))
        if (entry.is_regular_file() && entry.path().filename() == "ablation.csv") files.push_back(entry.path());
    require(!files.empty(), ErrorCode::Io, "report: no ablation.csv under " + a.in.string());
    std::sort(files.begin(), files.end());

    AblationTable merged;
    for (const auto& file : files) {
        std::string run = fs::relative(file.parent_path(), a.in).generic_string();
        if (run == ".") run = fs::absolute(a.in).lexically_normal().filename().string();
        if (run.empty()) run = "run";
        AblationTable t = parse_ablation_csv(file, run);
        for (const auto& d : t.datasets)
            if (std::find(merged.datasets.begin(), merged.datasets.end(), d) == merged.datasets.end())
                merged.datasets.push_back(d);
        for (auto& r : t.rows) merged.rows.push_back(std::move(r));
    }
    out << (a.format == "csv" ? merged.csv(true) : merged.markdown(true));
    return kOk;
}

}  // namespace

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument:
        case ErrorCode::UnknownName: return kUsage;
        case ErrorCode::Invariant: return kInternal;
        default: return kData;
    }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Segmented-latent forgery detector: train, evaluate and ablate voting ensembles", "sgf"};
    app.require_subcommand(1);
    app.footer(scheme_footer());
    const std::string arch_help = "architecture: proposed | mesonet | mesonet-seg";
    const std::string profile_help = "model profile: full (256x256 input) | desk (64x64 input)";

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "Generate a synthetic splice-tamper dataset with a manifest");
    s->add_option("--out", synth.out, "output directory")->required();
    s->add_option("--count", synth.cfg.count_per_class, "images per class")->capture_default_str();
    s->add_option("--size", synth.cfg.size, "image side in pixels")->capture_default_str();
    s->add_option("--seed", synth.cfg.seed, "generator seed")->capture_default_str();
    s->add_option("--format", synth.cfg.format, "image format: ppm | png")->capture_default_str();
    s->add_option("--val-fraction", synth.cfg.val_fraction, "share of each class in val")->capture_default_str();
    s->add_option("--test-fraction", synth.cfg.test_fraction, "share of each class in test")->capture_default_str();
    s->footer(scheme_footer());

    TrainArgs train;
    auto* t = app.add_subcommand("train", "Train one model and write a checkpoint plus a training log");
    t->add_option("--manifest", train.manifest, "JSON Lines manifest with train and val entries")->required();
    t->add_option("--out", train.out, "checkpoint path")->required();
    t->add_option("--log", train.log, "training log path (default: <out>.log.json)");
    t->add_option("--arch", train.arch, arch_help)->capture_default_str();
    t->add_option("--scheme", train.scheme, "segmentation scheme (see list below)")->capture_default_str();
    t->add_option("--profile", train.profile, profile_help)->capture_default_str();
    t->add_flag("--shared-heads", train.shared_heads, "share one classifier head across all blocks");
    train.config.attach(t);
    t->footer(scheme_footer());

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on one manifest split");
    e->add_option("--model", ev.model, "checkpoint path")->required();
    e->add_option("--manifest", ev.manifest, "JSON Lines manifest")->required();
    e->add_option("--split", ev.split, "split to evaluate: train | val | test")->capture_default_str();
    e->add_option("--scheme", ev.scheme, "expected scheme; a different checkpoint scheme is an error");
    e->add_option("--roc-csv", ev.roc_csv, "write the ROC curve as CSV");
    e->add_option("--report", ev.report, "write the metrics report as JSON");
    e->add_option("--threshold", ev.threshold, "also report accuracy at this P(real) threshold");
    e->footer(scheme_footer());

    PredictArgs pr;
    auto* p = app.add_subcommand("predict", "Classify one image as REAL or FAKE");
    p->add_option("--model", pr.model, "checkpoint path")->required();
    p->add_option("--image", pr.image, "PNG or binary PPM image")->required();
    p->add_flag("--json", pr.as_json, "print per-voter labels, probabilities and the tally as JSON");
    p->footer(scheme_footer());

    AblateArgs ab;
    auto* a = app.add_subcommand("ablate", "Train and evaluate one model per scheme and tabulate the results");
    a->add_option("--manifest", ab.manifest, "JSON Lines manifest")->required();
    a->add_option("--out", ab.out, "output directory for ablation.csv and ablation.md")->required();
    a->add_option("--schemes", ab.schemes, "comma-separated scheme names (default: all)");
    a->add_option("--arch", ab.arch, arch_help)->capture_default_str();
    a->add_option("--profile", ab.profile, profile_help)->capture_default_str();
    ab.config.attach(a);
    a->footer(scheme_footer());

    ReportArgs rp;
    auto* r = app.add_subcommand("report", "Merge ablation results found under a directory");
    r->add_option("--in", rp.in, "directory searched recursively for ablation.csv")->required();
    r->add_option("--format", rp.format, "output format: csv | md")
        ->check(CLI::IsMember({"csv", "md"}))
        ->capture_default_str();
    r->footer(scheme_footer());

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(std::move(reversed));
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& ex) {
        err << "error: " << ex.what() << "\nRun with --help for usage.\n";
        return kUsage;
    }

    try {
        if (*s) return cmd_synth(synth, out);
        if (*t) return cmd_train(train, out);
        if (*e) return cmd_eval(ev, out, err);
        if (*p) return cmd_predict(pr, out);
        if (*a) return cmd_ablate(ab, out, err);
        if (*r) return cmd_report(rp, out);
    } catch (const Error& ex) {
        err << "error (" << to_string(ex.code()) << "): " << ex.what() << '\n';
        return exit_code_for(ex.code());
    } catch (const std::exception& ex) {
        err << "internal error: " << ex.what() << '\n';
        return kInternal;
    }
    err << "error: no command given\n";
    return kUsage;
}

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace sgf::cli
