// hmmev: command-line driver for the synthetic pick-and-place pipeline.
//
//   hmmev synth --scenario full --seed 7 --out run
//   hmmev train --seed 7 --out run
//   hmmev calibrate --out run
//   hmmev identify --out run
//   hmmev detect --detector all --out run
//   hmmev eval --out run --assert
//   hmmev diag --seed 7 --out run --assert
//
// Every command writes under --out and records its configuration and output hashes in
// <out>/meta/<command>.json. Exit codes: 0 ok, 2 usage, 3 validation, 4 --assert failure.

#include "hmmev/hmmev.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using namespace hmmev;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitValidation = 3;
constexpr int kExitAssert = 4;

struct UsageError : Error {
    using Error::Error;
};

struct AssertFailure : Error {
    using Error::Error;
};

struct Options {
    std::optional<std::uint64_t> seed;
    std::string out = "run";
    std::string manifest;
    bool force = false;
    bool assert_mode = false;

    std::string scenario = "full";
    std::vector<int> states = {2, 3, 4};
    std::string covariance = "diag";
    double smoothing = 1e-3;
    double k = 3.0;
    double dod_factor = 1.5;
    int gap = 5;
    int window = 3;
    std::string detector = "all";
    std::string model_path;
    std::string trial_path;
    int length = 60;
};

fs::path out_dir(const Options& o) { return o.out; }
fs::path manifest_path(const Options& o) { return o.manifest.empty() ? out_dir(o) / "data" / "manifest.json" : fs::path(o.manifest); }
fs::path models_dir(const Options& o) { return out_dir(o) / "models"; }
fs::path calibration_path(const Options& o) { return out_dir(o) / "calibration" / "calibration.json"; }

std::uint64_t require_seed(const Options& o, const char* cmd) {
    if (!o.seed) throw UsageError(std::string(cmd) + " requires --seed");
    return *o.seed;
}

ExperimentConfig experiment_config(const Options& o) {
    ExperimentConfig cfg;
    cfg.train.covariance = covariance_type_from_string(o.covariance);
    cfg.train.transition_smoothing = o.smoothing;
    if (o.seed) cfg.train.seed = *o.seed;
    cfg.state_candidates = o.states;
    cfg.k = o.k;
    cfg.dod_factor = o.dod_factor;
    cfg.grouping_gap = o.gap;
    cfg.suppression_window = o.window;
    return cfg;
}

json config_echo(const Options& o, const std::string& command) {
    json j = {{"command", command},
              {"out", o.out},
              {"manifest", manifest_path(o).string()},
              {"force", o.force},
              {"assert", o.assert_mode},
              {"scenario", o.scenario},
              {"states", o.states},
              {"covariance", o.covariance},
              {"smoothing", o.smoothing},
              {"k", o.k},
              {"dod_factor", o.dod_factor},
              {"grouping_gap", o.gap},
              {"suppression_window", o.window},
              {"detector", o.detector}};
    j["seed"] = o.seed ? json(*o.seed) : json(nullptr);
    return j;
}

// Records the config echo and the SHA-256 of every file written by the command.
void write_meta(const Options& o, const std::string& command, const std::vector<fs::path>& artifacts) {
    json hashes = json::object();
    for (const auto& p : artifacts) hashes[fs::relative(p, out_dir(o)).generic_string()] = sha256_file(p);
    write_json_file(out_dir(o) / "meta" / (command + ".json"),
                    {{"tool", "hmmev"}, {"config", config_echo(o, command)}, {"artifacts", hashes}});
}

std::string trial_name(const std::string& manifest_entry) {
    std::string s = fs::path(manifest_entry).replace_extension().generic_string();
    for (auto& c : s) {
        if (c == '/') c = '_';
    }
    return s;
}

struct LoadedTrial {
    std::string name;
    TrialRole role;
    Trial trial;
};

std::vector<LoadedTrial> load_trials(const fs::path& manifest, std::initializer_list<TrialRole> roles) {
    const auto m = load_manifest(manifest);
    std::vector<LoadedTrial> out;
    for (const auto& e : m.trials) {
        if (std::find(roles.begin(), roles.end(), e.role) == roles.end()) continue;
        out.push_back({trial_name(e.path), e.role, load_trial(manifest.parent_path() / e.path)});
    }
    return out;
}

SkillModels load_models(const Options& o) {
    const fs::path index = models_dir(o) / "training.json";
    if (!fs::exists(index)) throw ValidationError("no trained models under " + models_dir(o).string() + "; run `hmmev train` first");
    SkillModels models;
    const json doc = read_json_file(index);
    for (const auto& s : doc.at("skills")) {
        const SkillId id = s.at("skill").get<SkillId>();
        models.emplace(id, load_model(models_dir(o) / s.at("file").get<std::string>()));
    }
    return models;
}

DetectorConfig detector_config(const Options& o) {
    DetectorConfig d;
    d.suppression_window = o.window;
    if (o.detector == "all") {
        d.gradient = d.magnitude = d.dod = true;
    } else {
        d.gradient = o.detector == "gradient";
        d.magnitude = o.detector == "magnitude";
        d.dod = o.detector == "dod";
    }
    return d;
}

std::vector<DetectorKind> enabled(const DetectorConfig& d) {
    std::vector<DetectorKind> out;
    if (d.gradient) out.push_back(DetectorKind::Gradient);
    if (d.dod) out.push_back(DetectorKind::Dod);
    if (d.magnitude) out.push_back(DetectorKind::Magnitude);
    return out;
}

// ---------------------------------------------------------------------------
// Reports

json reaction_json(const ReactionStats& st) {
    json per = json::object();
    for (const auto& [id, v] : st.per_skill) per[std::to_string(id)] = v ? json(*v) : json(nullptr);
    return {{"per_skill", per},
            {"signed_average", st.signed_average},
            {"abs_average", st.abs_average},
            {"mean_abs_block", st.mean_abs_block},
            {"missing_blocks", st.missing_blocks}};
}

json report_json(const EvaluationReport& r, const EvaluationInputs& in, const std::vector<DetectorKind>& detectors) {
    json j;
    if (!in.identification.empty()) {
        std::vector<std::vector<double>> rates(static_cast<std::size_t>(r.confusion.rates.rows()));
        std::vector<std::vector<long>> counts(rates.size());
        for (Eigen::Index i = 0; i < r.confusion.rates.rows(); ++i) {
            for (Eigen::Index c = 0; c < r.confusion.rates.cols(); ++c) {
                rates[static_cast<std::size_t>(i)].push_back(r.confusion.rates(i, c));
                counts[static_cast<std::size_t>(i)].push_back(std::lround(r.confusion.counts(i, c)));
            }
        }
        j["confusion"] = {{"skills", r.confusion.skills}, {"rates", rates}, {"counts", counts}};
        j["overall_accuracy"] = r.confusion.overall_accuracy;
        j["reaction"] = {{"first", reaction_json(r.first)},
                         {"first10", reaction_json(r.first_k)},
                         {"averages", {{"first_abs", r.first.abs_average},
                                       {"first10_abs", r.first_k.abs_average},
                                       {"overall_abs", (r.first.abs_average + r.first_k.abs_average) / 2.0}}}};
    }
    json per = json::object();
    json post = json::object();
    for (DetectorKind d : detectors) {
        const auto& dr = r.detectors.at(d);
        const std::string name(to_string(d));
        if (!in.anomaly.empty()) {
            per[name] = {{"tp", dr.counts.tp},
                         {"fp", dr.counts.fp},
                         {"fn", dr.counts.fn},
                         {"precision", dr.metrics.precision},
                         {"recall", dr.metrics.recall},
                         {"f", dr.metrics.f_score}};
        }
        if (!in.recovery.empty()) post[name] = dr.post_recovery_fp;
    }
    if (!in.anomaly.empty()) j["anomaly"] = {{"per_detector", per}};
    if (!in.recovery.empty()) j["post_recovery_fp"] = post;
    return j;
}

void print_report(const json& j) {
    if (j.contains("overall_accuracy")) {
        std::printf("identification accuracy %.4f\n", j["overall_accuracy"].get<double>());
        const auto& a = j["reaction"]["averages"];
        std::printf("reaction |first| %.2f%%  |first10| %.2f%%  overall %.2f%%\n", 100 * a["first_abs"].get<double>(),
                    100 * a["first10_abs"].get<double>(), 100 * a["overall_abs"].get<double>());
    }
    if (j.contains("anomaly")) {
        std::printf("%-10s %4s %4s %4s %9s %9s %9s\n", "detector", "tp", "fp", "fn", "precision", "recall", "F");
        for (const auto& [name, d] : j["anomaly"]["per_detector"].items()) {
            std::printf("%-10s %4d %4d %4d %8.2f%% %8.2f%% %8.2f%%\n", name.c_str(), d["tp"].get<int>(), d["fp"].get<int>(),
                        d["fn"].get<int>(), 100 * d["precision"].get<double>(), 100 * d["recall"].get<double>(),
                        100 * d["f"].get<double>());
        }
    }
    if (j.contains("post_recovery_fp")) {
        for (const auto& [name, n] : j["post_recovery_fp"].items()) std::printf("post-recovery FP %-10s %d\n", name.c_str(), n.get<int>());
    }
}

// Acceptance gates that apply to whatever sections the report contains.
std::vector<std::string> gate_failures(const json& j) {
    std::vector<std::string> fail;
    if (j.contains("overall_accuracy")) {
        if (j["overall_accuracy"].get<double>() < 0.95) fail.push_back("identification accuracy < 0.95");
        const auto& rates = j["confusion"]["rates"];
        for (std::size_t i = 0; i < rates.size(); ++i) {
            if (rates[i][i].get<double>() < 0.90) fail.push_back("confusion diagonal " + std::to_string(i + 1) + " < 0.90");
        }
        for (const char* c : {"first", "first10"}) {
            if (j["reaction"][c]["abs_average"].get<double>() > 0.05) fail.push_back(std::string("reaction ") + c + " > 5%");
        }
    }
    if (j.contains("anomaly")) {
        const auto& per = j["anomaly"]["per_detector"];
        if (per.contains("gradient")) {
            if (per["gradient"]["f"].get<double>() < 0.95) fail.push_back("gradient F < 0.95");
            if (per["gradient"]["recall"].get<double>() < 1.0) fail.push_back("gradient recall < 100%");
        }
        if (per.contains("gradient") && per.contains("dod") && per.contains("magnitude")) {
            const double g = per["gradient"]["f"], f2 = per["dod"]["f"], f1 = per["magnitude"]["f"];
            if (!(g > f2 && f2 > f1)) fail.push_back("F ordering gradient > dod > magnitude violated");
            if (!(per["magnitude"]["precision"].get<double>() < per["gradient"]["precision"].get<double>())) {
                fail.push_back("magnitude precision not below gradient precision");
            }
        }
    }
    if (j.contains("post_recovery_fp")) {
        const auto& p = j["post_recovery_fp"];
        if (p.contains("gradient") && p["gradient"].get<int>() != 0) fail.push_back("gradient post-recovery FP != 0");
        if (p.contains("magnitude") && p["magnitude"].get<int>() < 1) fail.push_back("magnitude post-recovery FP < 1");
    }
    return fail;
}

void enforce(const Options& o, const std::vector<std::string>& failures) {
    for (const auto& f : failures) std::fprintf(stderr, "assert: %s\n", f.c_str());
    if (o.assert_mode && !failures.empty()) throw AssertFailure(std::to_string(failures.size()) + " acceptance gate(s) failed");
}

EvaluationInputs inputs_for(const std::vector<LoadedTrial>& trials, const std::vector<DetectionRun>& runs) {
    EvaluationInputs in;
    for (std::size_t i = 0; i < trials.size(); ++i) {
        switch (trials[i].role) {
            case TrialRole::TestNominal:
                in.identification.push_back(&trials[i].trial);
                in.identification_runs.push_back(&runs[i]);
                in.anomaly.push_back(&trials[i].trial);
                in.anomaly_runs.push_back(&runs[i]);
                break;
            case TrialRole::TestAnomalous:
                in.anomaly.push_back(&trials[i].trial);
                in.anomaly_runs.push_back(&runs[i]);
                break;
            case TrialRole::Recovery:
                in.recovery.push_back(&trials[i].trial);
                in.recovery_runs.push_back(&runs[i]);
                break;
            case TrialRole::Train: break;
        }
    }
    return in;
}

std::string labels_csv(const DetectionRun& run) {
    std::string s = "t,argmax,hypothesis\n";
    for (std::size_t t = 0; t < run.argmax_labels.size(); ++t) {
        s += std::to_string(t + 1) + "," + std::to_string(run.argmax_labels[t]) + "," + std::to_string(run.hypothesis[t]) + "\n";
    }
    return s;
}

std::vector<SkillId> read_labels_column(const fs::path& p, int column) {
    std::vector<SkillId> out;
    std::istringstream in(read_text_file(p));
    std::string line;
    std::getline(in, line);
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = detail::split_commas(line);
        if (cells.size() != 3) throw ValidationError(p.string() + ":" + std::to_string(lineno) + ": expected 3 columns");
        out.push_back(detail::parse_int(cells[static_cast<std::size_t>(column)], p.string() + ":" + std::to_string(lineno) + ": "));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_synth(const Options& o) {
    const std::uint64_t seed = require_seed(o, "synth");
    const fs::path data = out_dir(o) / "data";
    if (fs::exists(data)) {
        if (!o.force) throw ValidationError(data.string() + " already exists; pass --force to overwrite");
        fs::remove_all(data);
    }
    const TaskSpec spec = default_task_spec(seed);
    std::vector<std::pair<TrialRole, std::vector<Trial>>> sets;
    const std::string& s = o.scenario;
    if (s == "nominal-5x5" || s == "full") {
        sets.emplace_back(TrialRole::Train, nominal_trials(spec, kTrainSeedBase));
        sets.emplace_back(TrialRole::TestNominal, nominal_trials(spec, kNominalTestSeedBase));
    }
    if (s == "anomaly-suite" || s == "anomaly-suite-14" || s == "full") sets.emplace_back(TrialRole::TestAnomalous, anomaly_suite(spec));
    if (s == "recovery" || s == "full") sets.emplace_back(TrialRole::Recovery, recovery_trials(spec));

    DatasetManifest m;
    m.name = s + "-seed" + std::to_string(seed);
    m.spec_hash = spec_hash(spec);
    std::vector<fs::path> written;
    int anomalies = 0;
    for (const auto& [role, trials] : sets) {
        for (std::size_t i = 0; i < trials.size(); ++i) {
            const std::string rel = std::string(to_string(role)) + "/trial_" + std::to_string(i + 1) + ".csv";
            save_trial(data / rel, trials[i], m.spec_hash);
            written.push_back(data / rel);
            written.push_back(sidecar_path(data / rel));
            m.trials.push_back({rel, role});
            anomalies += static_cast<int>(trials[i].anomalies.size());
        }
    }
    write_json_file(data / "spec.json", task_spec_to_json(spec));
    save_manifest(data / "manifest.json", m);
    written.push_back(data / "spec.json");
    written.push_back(data / "manifest.json");
    write_meta(o, "synth", written);
    std::printf("scenario %s: %zu trials, %d annotated anomalies, spec %s\n", s.c_str(), m.trials.size(), anomalies,
                m.spec_hash.substr(0, 12).c_str());
    return 0;
}

int cmd_train(const Options& o) {
    require_seed(o, "train");
    const auto cfg = experiment_config(o);
    std::vector<Trial> train;
    for (auto& t : load_trials(manifest_path(o), {TrialRole::Train})) train.push_back(std::move(t.trial));
    if (train.empty()) throw ValidationError("manifest has no train-role trials");
    const auto trained = train_skill_models(train, cfg, {1, 2, 3, 4, 5});
    std::vector<fs::path> written;
    json skills = json::array();
    for (const auto& [id, model] : trained.models) {
        const auto& info = trained.info.at(id);
        const std::string file = "skill_" + std::to_string(id) + ".json";
        save_model(models_dir(o) / file, model);
        written.push_back(models_dir(o) / file);
        json sweep = json::array();
        for (const auto& sc : info.selection.scores) sweep.push_back({{"n_states", sc.n_states}, {"heldout_loglik_per_step", sc.score}});
        skills.push_back({{"skill", id},
                          {"file", file},
                          {"n_states", model.n_states()},
                          {"final_loglik", info.final_loglik},
                          {"iterations", info.iterations},
                          {"converged", info.converged},
                          {"state_sweep", sweep}});
        std::printf("skill %d: %d states, final loglik %.3f, %d iterations%s\n", id, model.n_states(), info.final_loglik,
                    info.iterations, info.converged ? "" : " (not converged)");
        for (const auto& sc : info.selection.scores) std::printf("  N=%d held-out %.4f per step\n", sc.n_states, sc.score);
    }
    write_json_file(models_dir(o) / "training.json", {{"skills", skills}});
    written.push_back(models_dir(o) / "training.json");
    write_meta(o, "train", written);
    return 0;
}

int cmd_calibrate(const Options& o) {
    const auto cfg = experiment_config(o);
    const auto models = load_models(o);
    std::vector<Trial> nominal;
    for (auto& t : load_trials(manifest_path(o), {TrialRole::Train})) nominal.push_back(std::move(t.trial));
    const auto cal = calibrate_detectors(models, nominal, cfg);
    save_calibration(calibration_path(o), cal);
    for (const auto& [id, g] : cal.gradient) {
        std::printf("skill %d: grad [%.3f, %.3f] threshold %.3f, dod bound %.3f\n", id, g.grad_min, g.grad_max, g.threshold(),
                    cal.dod_bound.at(id));
    }
    write_meta(o, "calibrate", {calibration_path(o)});
    return 0;
}

int cmd_identify(const Options& o) {
    const auto cfg = experiment_config(o);
    const auto models = load_models(o);
    const auto trials = load_trials(manifest_path(o), {TrialRole::TestNominal});
    if (trials.empty()) throw ValidationError("manifest has no test-nominal trials");
    const fs::path dir = out_dir(o) / "identify";
    std::vector<fs::path> written;
    std::vector<DetectionRun> runs;
    for (const auto& t : trials) {
        DetectionRun r;
        r.argmax_labels = identify_sequence(models, t.trial.observations);
        r.hypothesis = r.argmax_labels;
        write_text_file(dir / (t.name + "_labels.csv"), labels_csv(r));
        written.push_back(dir / (t.name + "_labels.csv"));
        runs.push_back(std::move(r));
    }
    auto in = inputs_for(trials, runs);
    in.anomaly.clear();
    in.anomaly_runs.clear();
    const json report = report_json(evaluate(in, cfg), in, {});
    write_json_file(dir / "report.json", report);
    written.push_back(dir / "report.json");
    write_meta(o, "identify", written);
    print_report(report);
    enforce(o, gate_failures(report));
    return 0;
}

int cmd_detect(const Options& o) {
    const auto cfg = experiment_config(o);
    const auto models = load_models(o);
    if (!fs::exists(calibration_path(o))) {
        throw ValidationError("no calibration at " + calibration_path(o).string() + "; run `hmmev calibrate` first");
    }
    const auto cal = load_calibration(calibration_path(o));
    const DetectorConfig dcfg = detector_config(o);
    const auto trials = load_trials(manifest_path(o), {TrialRole::TestNominal, TrialRole::TestAnomalous, TrialRole::Recovery});
    if (trials.empty()) throw ValidationError("manifest has no test or recovery trials");
    const fs::path dir = out_dir(o) / "detect";
    fs::remove_all(dir);
    std::vector<fs::path> written;
    std::vector<DetectionRun> runs;
    for (const auto& t : trials) {
        runs.push_back(run_detector(models, cal, t.trial.observations, dcfg));
        const auto& r = runs.back();
        std::vector<std::string> header{"t"};
        for (SkillId id : r.skills) header.push_back("grad_" + std::to_string(id));
        for (SkillId id : r.skills) header.push_back("loglik_" + std::to_string(id));
        header.push_back("local_loglik");
        Eigen::MatrixXd series(r.scores.rows(), 2 * r.scores.cols() + 2);
        series.col(0) = Eigen::VectorXd::LinSpaced(r.scores.rows(), 1.0, static_cast<double>(r.scores.rows()));
        series.middleCols(1, r.scores.cols()) = r.scores;
        series.middleCols(1 + r.scores.cols(), r.scores.cols()) = r.logliks;
        series.col(series.cols() - 1) = Eigen::Map<const Eigen::VectorXd>(r.local_loglik.data(), static_cast<Eigen::Index>(r.local_loglik.size()));
        for (const auto& [name, text] : std::vector<std::pair<std::string, std::string>>{
                 {t.name + ".ndjson", timeline_to_ndjson(r.timeline)},
                 {t.name + "_labels.csv", labels_csv(r)},
                 {t.name + "_series.csv", matrix_to_csv(header, series)}}) {
            write_text_file(dir / name, text);
            written.push_back(dir / name);
        }
    }
    std::vector<std::string> names;
    for (DetectorKind d : enabled(dcfg)) names.emplace_back(to_string(d));
    write_json_file(dir / "detectors.json", {{"detectors", names}, {"manifest", manifest_path(o).string()}});
    written.push_back(dir / "detectors.json");
    const auto in = inputs_for(trials, runs);
    const json report = report_json(evaluate(in, cfg), in, enabled(dcfg));
    write_json_file(dir / "report.json", report);
    written.push_back(dir / "report.json");
    write_meta(o, "detect", written);
    print_report(report);
    enforce(o, gate_failures(report));
    return 0;
}

int cmd_eval(const Options& o) {
    const auto cfg = experiment_config(o);
    const fs::path dir = out_dir(o) / "detect";
    if (!fs::exists(dir / "detectors.json")) throw ValidationError("no detector output under " + dir.string() + "; run `hmmev detect` first");
    std::vector<DetectorKind> detectors;
    const json listed = read_json_file(dir / "detectors.json");
    for (const auto& n : listed.at("detectors")) detectors.push_back(detector_kind_from_string(n.get<std::string>()));
    const auto trials = load_trials(manifest_path(o), {TrialRole::TestNominal, TrialRole::TestAnomalous, TrialRole::Recovery});
    std::vector<DetectionRun> runs;
    for (const auto& t : trials) {
        DetectionRun r;
        r.timeline = load_timeline(dir / (t.name + ".ndjson"));
        r.argmax_labels = read_labels_column(dir / (t.name + "_labels.csv"), 1);
        r.hypothesis = read_labels_column(dir / (t.name + "_labels.csv"), 2);
        if (static_cast<int>(r.argmax_labels.size()) != t.trial.length()) {
            throw ValidationError(t.name + ": stored labels have " + std::to_string(r.argmax_labels.size()) +
                                  " steps, trial has " + std::to_string(t.trial.length()));
        }
        for (const auto& e : r.timeline.events) {
            if (e.t < 1 || e.t > t.trial.length()) throw ValidationError(t.name + ": timeline event outside the trial");
        }
        runs.push_back(std::move(r));
    }
    const auto in = inputs_for(trials, runs);
    const json report = report_json(evaluate(in, cfg), in, detectors);
    write_json_file(out_dir(o) / "eval" / "report.json", report);
    write_meta(o, "eval", {out_dir(o) / "eval" / "report.json"});
    print_report(report);
    enforce(o, gate_failures(report));
    return 0;
}

int cmd_diag(const Options& o) {
    std::optional<HmmModel> model;
    Observations y;
    std::vector<int> transitions;
    if (!o.model_path.empty() || !o.trial_path.empty()) {
        if (o.model_path.empty() || o.trial_path.empty()) throw UsageError("diag needs both --model and --trial, or neither");
        model = load_model(o.model_path);
        y = load_trial(o.trial_path).observations;
    } else {
        auto b = well_separated_benchmark(require_seed(o, "diag"), o.length);
        transitions = transition_times(b.states);
        model = std::move(b.model);
        y = std::move(b.observations);
    }
    const fs::path dir = out_dir(o) / "diag";
    const auto trace = incremental_viterbi(*model, y);
    const auto report = detect_sequence_breaks(trace, transitions);
    const bool dominant = check_self_transition_dominance(*model);
    std::vector<fs::path> written;
    auto emit = [&](const std::string& name, const std::string& text) {
        write_text_file(dir / name, text);
        written.push_back(dir / name);
    };

    std::vector<std::string> tri_header;
    for (Eigen::Index i = 1; i <= y.rows(); ++i) tri_header.push_back("z" + std::to_string(i));
    emit("triangle.csv", matrix_to_csv(tri_header, triangle_matrix(trace)));
    std::vector<std::string> em_header;
    for (int i = 1; i <= model->n_states(); ++i) em_header.push_back("log_b" + std::to_string(i));
    emit("emissions.csv", matrix_to_csv(em_header, emission_curves(*model, y)));

    json summary = {{"n_states", model->n_states()},
                    {"length", y.rows()},
                    {"self_transition_dominant", dominant},
                    {"transitions", report.transitions},
                    {"max_break_len", report.max_break_len},
                    {"breaks_localized", breaks_localized(report, 1, 1)}};
    json breaks = json::array();
    for (const auto& b : report.breaks) breaks.push_back({{"t", b.t}, {"first_divergence", b.first_divergence}, {"length", b.length}});
    summary["breaks"] = breaks;
    std::vector<std::string> failures;
    if (y.rows() >= 2) {
        const auto grads = gradient_series(*model, y);
        const auto res = corollary_residuals(*model, y);
        const auto maxb = max_emission_series(*model, y);
        Eigen::MatrixXd g(static_cast<Eigen::Index>(grads.size()), 4);
        for (std::size_t k = 0; k < grads.size(); ++k) {
            g.row(static_cast<Eigen::Index>(k)) << static_cast<double>(k + 2), grads[k], maxb[k + 1], res[k];
        }
        emit("gradient.csv", matrix_to_csv({"t", "grad", "max_log_b", "residual"}, g));
        const auto transitions_used = transitions.empty() ? report.transitions : transitions;
        const auto c = summarize_corollary(*model, y, transitions_used);
        summary["corollary"] = {{"tolerance", 1e-3},
                                {"stable_steps", c.stable_steps},
                                {"within_tolerance", c.within_tolerance},
                                {"fraction", c.fraction},
                                {"correlation", c.correlation}};
        std::printf("corollary: %.1f%% of %zu stable steps within 1e-3, correlation %.3f\n", 100 * c.fraction, c.stable_steps,
                    c.correlation);
        if (c.fraction < 0.95) failures.push_back("corollary fraction < 0.95");
        if (c.correlation < 0.9) failures.push_back("gradient/emission correlation < 0.9");
    }
    emit("breaks.json", summary.dump(2) + "\n");
    std::printf("sequence breaks: %zu, longest %d, localized %s, self-transition dominant %s\n", report.breaks.size(),
                report.max_break_len, breaks_localized(report, 1, 1) ? "yes" : "no", dominant ? "yes" : "no");
    if (report.max_break_len > 1 || !breaks_localized(report, 1, 1)) failures.push_back("sequence breaks not short and localized");
    write_meta(o, "diag", written);
    enforce(o, failures);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"HMM forward-gradient skill identification and anomaly detection"};
    app.require_subcommand(1);
    Options o;
    auto globals = [&](CLI::App* c) {
        c->add_option("--seed", o.seed, "Random seed");
        c->add_option("--out", o.out, "Run directory")->capture_default_str();
        c->add_option("--manifest", o.manifest, "Dataset manifest (default <out>/data/manifest.json)");
        c->add_flag("--force", o.force, "Overwrite existing synthesized data");
        c->add_flag("--assert", o.assert_mode, "Exit 4 when acceptance gates fail");
    };
    auto tuning = [&](CLI::App* c) {
        c->add_option("--k", o.k, "Magnitude threshold multiplier")->check(CLI::Range(0.0, 100.0))->capture_default_str();
        c->add_option("--dod-factor", o.dod_factor, "Derivative-of-difference safety factor")->check(CLI::Range(1.0, 100.0))->capture_default_str();
        c->add_option("--gap", o.gap, "Trigger grouping gap (steps)")->check(CLI::Range(0, 1000))->capture_default_str();
        c->add_option("--window", o.window, "Post-switch suppression window (steps)")->check(CLI::Range(0, 1000))->capture_default_str();
    };

    auto* synth = app.add_subcommand("synth", "Write a synthetic dataset and its manifest");
    synth->add_option("--scenario", o.scenario, "Scenario")
        ->check(CLI::IsMember({"nominal-5x5", "anomaly-suite", "anomaly-suite-14", "recovery", "full"}))
        ->capture_default_str();
    auto* train = app.add_subcommand("train", "Train one HMM per skill from train-role trials");
    train->add_option("--states", o.states, "Candidate state counts")->check(CLI::Range(1, 20))->delimiter(',');
    train->add_option("--covariance", o.covariance, "Covariance type")->check(CLI::IsMember({"diag", "full"}))->capture_default_str();
    train->add_option("--smoothing", o.smoothing, "Transition smoothing")->check(CLI::Range(0.0, 1.0))->capture_default_str();
    auto* calibrate = app.add_subcommand("calibrate", "Calibrate detector thresholds on train-role trials");
    auto* identify = app.add_subcommand("identify", "Per-timestep skill identification on test-nominal trials");
    auto* detect = app.add_subcommand("detect", "Run the online detector over test and recovery trials");
    detect->add_option("--detector", o.detector, "Detector")->check(CLI::IsMember({"gradient", "magnitude", "dod", "all"}))->capture_default_str();
    auto* eval = app.add_subcommand("eval", "Recompute the report from stored detector output");
    auto* diag = app.add_subcommand("diag", "Viterbi and emission diagnostics");
    diag->add_option("--model", o.model_path, "Model JSON (default: well-separated benchmark)");
    diag->add_option("--trial", o.trial_path, "Trial CSV");
    diag->add_option("--length", o.length, "Benchmark length")->check(CLI::Range(1, 100000))->capture_default_str();
    for (auto* c : {synth, train, calibrate, identify, detect, eval, diag}) globals(c);
    for (auto* c : {calibrate, identify, detect, eval}) tuning(c);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*synth) return cmd_synth(o);
        if (*train) return cmd_train(o);
        if (*calibrate) return cmd_calibrate(o);
        if (*identify) return cmd_identify(o);
        if (*detect) return cmd_detect(o);
        if (*eval) return cmd_eval(o);
        if (*diag) return cmd_diag(o);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return kExitUsage;
    } catch (const AssertFailure& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kExitAssert;
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitValidation;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return kExitUsage;
}
