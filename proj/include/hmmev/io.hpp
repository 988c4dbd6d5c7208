#pragma once

#include "hmmev/detection.hpp"
#include "hmmev/synthesis.hpp"
#include "hmmev/trial.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace hmmev {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr std::string_view kModelVersion = "hmm-model/1";
inline constexpr std::string_view kGradCalVersion = "grad-cal/1";
inline constexpr std::string_view kMagThrVersion = "mag-thr/1";
inline constexpr std::string_view kCalibrationVersion = "detector-cal/1";
inline constexpr std::string_view kTrialVersion = "trial/1";
inline constexpr std::string_view kManifestVersion = "dataset/1";

// ---------------------------------------------------------------------------
// Files and hashes

inline std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const fs::path& path, std::string_view content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw ValidationError("write failed for " + path.string());
}

inline std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 computation failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

inline std::string sha256_file(const fs::path& path) { return sha256_hex(read_text_file(path)); }

inline json read_json_file(const fs::path& path) {
    try {
        return json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

inline void write_json_file(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

inline void check_version(const json& j, std::string_view expected, const std::string& what) {
    if (!j.is_object() || !j.contains("version")) throw ValidationError(what + ": missing version field");
    const auto v = j.at("version").get<std::string>();
    if (v != expected) {
        throw ValidationError(what + ": unsupported version '" + v + "' (expected '" + std::string(expected) + "')");
    }
}

// Reads a field, turning nlohmann type errors into validation errors that name the field.
template <typename T>
T field(const json& j, const char* key, const std::string& what) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ValidationError(what + ": bad or missing field '" + key + "': " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Models

inline json model_to_json(const HmmModel& model) {
    const int n = model.n_states();
    json j;
    j["version"] = kModelVersion;
    j["n_states"] = n;
    j["dim"] = model.dim();
    j["pi"] = std::vector<double>(model.pi().data(), model.pi().data() + n);
    json trans = json::array();
    for (int r = 0; r < n; ++r) {
        std::vector<double> row(static_cast<std::size_t>(n));
        for (int c = 0; c < n; ++c) row[static_cast<std::size_t>(c)] = model.trans()(r, c);
        trans.push_back(row);
    }
    j["trans"] = trans;
    json em = json::array();
    for (const auto& e : model.emissions()) {
        json x;
        x["mean"] = std::vector<double>(e.mean().data(), e.mean().data() + e.dim());
        x["cov_type"] = to_string(e.covariance_type());
        if (e.covariance_type() == CovarianceType::Diagonal) {
            const Eigen::VectorXd v = e.variances();
            x["cov"] = std::vector<double>(v.data(), v.data() + v.size());
        } else {
            json rows = json::array();
            for (Eigen::Index r = 0; r < e.dim(); ++r) {
                std::vector<double> row(static_cast<std::size_t>(e.dim()));
                for (Eigen::Index c = 0; c < e.dim(); ++c) row[static_cast<std::size_t>(c)] = e.covariance()(r, c);
                rows.push_back(row);
            }
            x["cov"] = rows;
        }
        em.push_back(x);
    }
    j["emissions"] = em;
    return j;
}

inline Eigen::VectorXd to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline HmmModel model_from_json(const json& j) {
    const std::string what = "model";
    check_version(j, kModelVersion, what);
    const auto n = field<int>(j, "n_states", what);
    const auto d = field<int>(j, "dim", what);
    const auto pi = field<std::vector<double>>(j, "pi", what);
    const auto trans = field<std::vector<std::vector<double>>>(j, "trans", what);
    if (n < 1 || static_cast<int>(pi.size()) != n || static_cast<int>(trans.size()) != n) {
        throw ValidationError("model: state count does not match pi/trans sizes");
    }
    Eigen::MatrixXd a(n, n);
    for (int r = 0; r < n; ++r) {
        if (static_cast<int>(trans[static_cast<std::size_t>(r)].size()) != n) {
            throw ValidationError("model: transition row " + std::to_string(r + 1) + " has the wrong length");
        }
        for (int c = 0; c < n; ++c) a(r, c) = trans[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    }
    const json& em = j.at("emissions");
    if (!em.is_array() || static_cast<int>(em.size()) != n) throw ValidationError("model: expected one emission per state");
    std::vector<GaussianEmission> emissions;
    for (const auto& x : em) {
        const auto mean = field<std::vector<double>>(x, "mean", what);
        if (static_cast<int>(mean.size()) != d) throw ValidationError("model: emission mean has the wrong dimension");
        const auto type = covariance_type_from_string(field<std::string>(x, "cov_type", what));
        if (type == CovarianceType::Diagonal) {
            const auto v = field<std::vector<double>>(x, "cov", what);
            emissions.push_back(GaussianEmission::diagonal(to_vector(mean), to_vector(v)));
        } else {
            const auto rows = field<std::vector<std::vector<double>>>(x, "cov", what);
            Eigen::MatrixXd cov(d, d);
            if (static_cast<int>(rows.size()) != d) throw ValidationError("model: covariance has the wrong shape");
            for (int r = 0; r < d; ++r) {
                if (static_cast<int>(rows[static_cast<std::size_t>(r)].size()) != d) {
                    throw ValidationError("model: covariance has the wrong shape");
                }
                for (int c = 0; c < d; ++c) cov(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
            }
            emissions.push_back(GaussianEmission::full(to_vector(mean), cov));
        }
    }
    return HmmModel(to_vector(pi), a, std::move(emissions));
}

inline void save_model(const fs::path& path, const HmmModel& model) { write_json_file(path, model_to_json(model)); }

inline HmmModel load_model(const fs::path& path) {
    try {
        return model_from_json(read_json_file(path));
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Calibrations

inline json gradient_calibration_to_json(const GradientCalibration& c) {
    return {{"version", kGradCalVersion},
            {"model_id", c.model_id},
            {"grad_min", c.grad_min},
            {"grad_max", c.grad_max},
            {"grad_range", c.grad_range}};
}

inline GradientCalibration gradient_calibration_from_json(const json& j) {
    const std::string what = "gradient calibration";
    check_version(j, kGradCalVersion, what);
    GradientCalibration c;
    c.model_id = field<SkillId>(j, "model_id", what);
    c.grad_min = field<double>(j, "grad_min", what);
    c.grad_max = field<double>(j, "grad_max", what);
    c.grad_range = field<double>(j, "grad_range", what);
    if (!(c.grad_max >= c.grad_min) || std::abs(c.grad_range - (c.grad_max - c.grad_min)) > 1e-9 * (1.0 + std::abs(c.grad_range))) {
        throw ValidationError("gradient calibration: inconsistent min/max/range");
    }
    return c;
}

inline json magnitude_threshold_to_json(const MagnitudeThreshold& t, double dod_bound) {
    return {{"version", kMagThrVersion}, {"model_id", t.model_id}, {"k", t.k},
            {"mu", t.mu},                {"sigma", t.sigma},       {"dod_bound", dod_bound}};
}

inline std::pair<MagnitudeThreshold, double> magnitude_threshold_from_json(const json& j) {
    const std::string what = "magnitude threshold";
    check_version(j, kMagThrVersion, what);
    MagnitudeThreshold t;
    t.model_id = field<SkillId>(j, "model_id", what);
    t.k = field<double>(j, "k", what);
    t.mu = field<std::vector<double>>(j, "mu", what);
    t.sigma = field<std::vector<double>>(j, "sigma", what);
    if (t.mu.empty() || t.mu.size() != t.sigma.size()) throw ValidationError("magnitude threshold: mu/sigma size mismatch");
    return {t, field<double>(j, "dod_bound", what)};
}

inline json calibration_to_json(const DetectorCalibration& cal) {
    json skills = json::array();
    for (const auto& [id, g] : cal.gradient) {
        json s;
        s["gradient"] = gradient_calibration_to_json(g);
        if (cal.magnitude.count(id)) {
            const double bound = cal.dod_bound.count(id) ? cal.dod_bound.at(id) : 0.0;
            s["magnitude"] = magnitude_threshold_to_json(cal.magnitude.at(id), bound);
        }
        skills.push_back(s);
    }
    return {{"version", kCalibrationVersion}, {"skills", skills}};
}

inline DetectorCalibration calibration_from_json(const json& j) {
    check_version(j, kCalibrationVersion, "calibration");
    DetectorCalibration cal;
    for (const auto& s : j.at("skills")) {
        const auto g = gradient_calibration_from_json(s.at("gradient"));
        cal.gradient[g.model_id] = g;
        if (s.contains("magnitude")) {
            auto [t, bound] = magnitude_threshold_from_json(s.at("magnitude"));
            if (t.model_id != g.model_id) throw ValidationError("calibration: skill ids disagree");
            cal.magnitude[t.model_id] = t;
            cal.dod_bound[t.model_id] = bound;
        }
    }
    return cal;
}

inline void save_calibration(const fs::path& path, const DetectorCalibration& cal) {
    write_json_file(path, calibration_to_json(cal));
}

inline DetectorCalibration load_calibration(const fs::path& path) {
    try {
        return calibration_from_json(read_json_file(path));
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Event timelines (NDJSON)

inline std::string timeline_to_ndjson(const EventTimeline& tl) {
    std::string out;
    for (const auto& e : tl.events) {
        json j = {{"t", e.t},
                  {"kind", to_string(e.kind)},
                  {"skill", e.skill},
                  {"detector", to_string(e.detector)},
                  {"value", e.value}};
        out += j.dump() + "\n";
    }
    return out;
}

inline EventTimeline timeline_from_ndjson(std::string_view text) {
    EventTimeline tl;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            Event e;
            e.t = j.at("t").get<int>();
            e.kind = event_kind_from_string(j.at("kind").get<std::string>());
            e.skill = j.at("skill").get<SkillId>();
            e.detector = detector_kind_from_string(j.at("detector").get<std::string>());
            e.value = j.at("value").get<double>();
            tl.events.push_back(e);
        } catch (const json::exception& ex) {
            throw ValidationError("timeline line " + std::to_string(lineno) + ": " + ex.what());
        }
    }
    return tl;
}

inline void save_timeline(const fs::path& path, const EventTimeline& tl) { write_text_file(path, timeline_to_ndjson(tl)); }

inline EventTimeline load_timeline(const fs::path& path) { return timeline_from_ndjson(read_text_file(path)); }

// ---------------------------------------------------------------------------
// Trials: CSV body plus JSON sidecar for windows and provenance

inline std::string format_double(double v) {
    char buf[32];
    const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf, static_cast<std::size_t>(n));
}

inline std::string trial_csv_header(int dim) {
    std::string h = "t";
    for (int c = 0; c < dim; ++c) h += ",y" + std::to_string(c);
    return h + ",skill,anomaly,recovery";
}

inline std::string trial_to_csv(const Trial& trial) {
    validate_trial(trial);
    std::string out = trial_csv_header(trial.dim()) + "\n";
    for (int t = 1; t <= trial.length(); ++t) {
        out += std::to_string(t);
        for (int c = 0; c < trial.dim(); ++c) out += "," + format_double(trial.observations(t - 1, c));
        out += "," + std::to_string(trial.skill_labels[static_cast<std::size_t>(t - 1)]) + ",";
        std::string names;
        for (const auto& w : trial.anomalies) {
            if (t >= w.t_start && t <= w.t_end) names += (names.empty() ? "" : "|") + std::string(to_string(w.type));
        }
        out += names + ",";
        for (const auto& w : trial.recovery_windows) {
            if (t >= w.t_start && t <= w.t_end) {
                out += "1";
                break;
            }
        }
        out += "\n";
    }
    return out;
}

inline json trial_sidecar(const Trial& trial, const std::string& spec_hash) {
    json anomalies = json::array();
    for (const auto& w : trial.anomalies) {
        anomalies.push_back({{"t_start", w.t_start}, {"t_end", w.t_end}, {"type", to_string(w.type)}});
    }
    json recovery = json::array();
    for (const auto& w : trial.recovery_windows) recovery.push_back({{"t_start", w.t_start}, {"t_end", w.t_end}});
    return {{"version", kTrialVersion},
            {"length", trial.length()},
            {"dim", trial.dim()},
            {"dt", trial.dt},
            {"anomalies", anomalies},
            {"recovery_windows", recovery},
            {"spec_hash", spec_hash}};
}

inline fs::path sidecar_path(const fs::path& csv) {
    fs::path p = csv;
    p.replace_extension(".json");
    return p;
}

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::string at_line(const std::string& source, int line) { return source + ":" + std::to_string(line) + ": "; }

inline double parse_double(std::string_view s, const std::string& where) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ValidationError(where + "cannot parse '" + std::string(s) + "' as a number");
    }
    if (!std::isfinite(v)) throw ValidationError(where + "non-finite value '" + std::string(s) + "'");
    return v;
}

inline int parse_int(std::string_view s, const std::string& where) {
    int v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ValidationError(where + "cannot parse '" + std::string(s) + "' as an integer");
    }
    return v;
}

}  // namespace detail

// Parses the CSV body. Windows are rebuilt from the annotation columns; callers with a
// sidecar should prefer its exact windows (see load_trial).
inline Trial trial_from_csv(std::string_view text, const std::string& source = "trial",
                            std::optional<int> expected_dim = std::nullopt) {
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line)) throw ValidationError(source + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = detail::split_commas(line);
    const int dim = static_cast<int>(header.size()) - 4;
    if (dim < 1 || line != trial_csv_header(dim)) {
        throw ValidationError(detail::at_line(source, 1) + "malformed header, expected 't,y0..yD-1,skill,anomaly,recovery'");
    }
    if (expected_dim && *expected_dim != dim) {
        throw ValidationError(detail::at_line(source, 1) + "file has " + std::to_string(dim) +
                              " observation columns, expected " + std::to_string(*expected_dim));
    }
    std::vector<double> values;
    Trial trial;
    std::vector<std::string> anomaly_col;
    std::vector<bool> recovery_col;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = detail::at_line(source, lineno);
        const auto cells = detail::split_commas(line);
        if (static_cast<int>(cells.size()) != dim + 4) {
            throw ValidationError(where + "expected " + std::to_string(dim + 4) + " columns (" + std::to_string(dim) +
                                  " observations), found " + std::to_string(cells.size()));
        }
        const int t = detail::parse_int(cells[0], where);
        if (t != static_cast<int>(trial.skill_labels.size()) + 1) throw ValidationError(where + "timesteps must be 1, 2, 3, ...");
        for (int c = 0; c < dim; ++c) values.push_back(detail::parse_double(cells[static_cast<std::size_t>(c + 1)], where));
        trial.skill_labels.push_back(detail::parse_int(cells[static_cast<std::size_t>(dim + 1)], where));
        anomaly_col.emplace_back(cells[static_cast<std::size_t>(dim + 2)]);
        const auto rec = cells[static_cast<std::size_t>(dim + 3)];
        if (!rec.empty() && rec != "1") throw ValidationError(where + "recovery column must be empty or 1");
        recovery_col.push_back(!rec.empty());
    }
    const auto len = static_cast<Eigen::Index>(trial.skill_labels.size());
    if (len == 0) throw ValidationError(source + ": no observations");
    trial.observations = Eigen::Map<const Observations>(values.data(), len, dim);

    for (AnomalyType type : kAllAnomalyTypes) {
        const std::string name(to_string(type));
        std::optional<int> open;
        for (int t = 1; t <= len + 1; ++t) {
            bool here = false;
            if (t <= len) {
                std::string_view cell = anomaly_col[static_cast<std::size_t>(t - 1)];
                std::size_t start = 0;
                while (start <= cell.size()) {
                    const auto bar = cell.find('|', start);
                    const auto tok = cell.substr(start, bar == std::string_view::npos ? std::string_view::npos : bar - start);
                    if (!tok.empty()) {
                        anomaly_type_from_string(tok);
                        if (tok == name) here = true;
                    }
                    if (bar == std::string_view::npos) break;
                    start = bar + 1;
                }
            }
            if (here && !open) open = t;
            if (!here && open) {
                trial.anomalies.push_back({*open, t - 1, type});
                open.reset();
            }
        }
    }
    std::sort(trial.anomalies.begin(), trial.anomalies.end(),
              [](const auto& a, const auto& b) { return a.t_start < b.t_start; });
    std::optional<int> open;
    for (int t = 1; t <= len + 1; ++t) {
        const bool here = t <= len && recovery_col[static_cast<std::size_t>(t - 1)];
        if (here && !open) open = t;
        if (!here && open) {
            trial.recovery_windows.push_back({*open, t - 1});
            open.reset();
        }
    }
    validate_trial(trial);
    return trial;
}

inline void save_trial(const fs::path& csv, const Trial& trial, const std::string& spec_hash = "") {
    write_text_file(csv, trial_to_csv(trial));
    write_json_file(sidecar_path(csv), trial_sidecar(trial, spec_hash));
}

inline Trial load_trial(const fs::path& csv, std::optional<int> expected_dim = std::nullopt) {
    Trial trial = trial_from_csv(read_text_file(csv), csv.string(), expected_dim);
    const fs::path side = sidecar_path(csv);
    if (!fs::exists(side)) return trial;
    const json j = read_json_file(side);
    const std::string what = side.string();
    check_version(j, kTrialVersion, what);
    if (field<int>(j, "length", what) != trial.length() || field<int>(j, "dim", what) != trial.dim()) {
        throw ValidationError(what + ": sidecar shape does not match " + csv.string());
    }
    trial.dt = field<double>(j, "dt", what);
    trial.anomalies.clear();
    for (const auto& w : j.at("anomalies")) {
        trial.anomalies.push_back({field<int>(w, "t_start", what), field<int>(w, "t_end", what),
                                   anomaly_type_from_string(field<std::string>(w, "type", what))});
    }
    trial.recovery_windows.clear();
    for (const auto& w : j.at("recovery_windows")) {
        trial.recovery_windows.push_back({field<int>(w, "t_start", what), field<int>(w, "t_end", what)});
    }
    validate_trial(trial);
    return trial;
}

// ---------------------------------------------------------------------------
// Task spec hash

inline json task_spec_to_json(const TaskSpec& spec) {
    json skills = json::array();
    for (const auto& s : spec.skills) {
        skills.push_back({{"id", s.id},
                          {"name", s.name},
                          {"min_duration", s.min_duration},
                          {"max_duration", s.max_duration},
                          {"generator", model_to_json(s.generator)}});
    }
    return {{"dim", spec.dim},
            {"seed", spec.seed},
            {"min_separation", spec.min_separation},
            {"dt", spec.dt},
            {"wrench_bias", spec.wrench_bias},
            {"skills", skills}};
}

inline std::string spec_hash(const TaskSpec& spec) { return sha256_hex(task_spec_to_json(spec).dump()); }

// ---------------------------------------------------------------------------
// Dataset manifest

enum class TrialRole { Train, TestNominal, TestAnomalous, Recovery };

inline std::string_view to_string(TrialRole r) {
    switch (r) {
        case TrialRole::Train: return "train";
        case TrialRole::TestNominal: return "test-nominal";
        case TrialRole::TestAnomalous: return "test-anomalous";
        case TrialRole::Recovery: return "recovery";
    }
    return "unknown";
}

inline TrialRole trial_role_from_string(std::string_view s) {
    for (TrialRole r : {TrialRole::Train, TrialRole::TestNominal, TrialRole::TestAnomalous, TrialRole::Recovery}) {
        if (to_string(r) == s) return r;
    }
    throw ValidationError("unknown trial role '" + std::string(s) + "'");
}

struct ManifestEntry {
    std::string path;  // relative to the manifest's directory
    TrialRole role = TrialRole::Train;
};

struct DatasetManifest {
    std::string name;
    std::string spec_hash;
    std::vector<ManifestEntry> trials;

    [[nodiscard]] std::vector<std::string> paths_with(TrialRole role) const {
        std::vector<std::string> out;
        for (const auto& t : trials) {
            if (t.role == role) out.push_back(t.path);
        }
        return out;
    }
};

inline void validate_manifest(const DatasetManifest& m) {
    std::set<std::string> seen;
    for (const auto& t : m.trials) {
        if (!seen.insert(t.path).second) throw ValidationError("manifest lists '" + t.path + "' twice");
    }
}

inline json manifest_to_json(const DatasetManifest& m) {
    validate_manifest(m);
    json trials = json::array();
    for (const auto& t : m.trials) trials.push_back({{"path", t.path}, {"role", to_string(t.role)}});
    return {{"version", kManifestVersion}, {"name", m.name}, {"spec_hash", m.spec_hash}, {"trials", trials}};
}

inline void save_manifest(const fs::path& path, const DatasetManifest& m) { write_json_file(path, manifest_to_json(m)); }

// Loads and checks that every referenced trial file exists.
inline DatasetManifest load_manifest(const fs::path& path) {
    const json j = read_json_file(path);
    const std::string what = path.string();
    check_version(j, kManifestVersion, what);
    DatasetManifest m;
    m.name = field<std::string>(j, "name", what);
    m.spec_hash = field<std::string>(j, "spec_hash", what);
    std::vector<std::string> missing;
    for (const auto& t : j.at("trials")) {
        ManifestEntry e{field<std::string>(t, "path", what), trial_role_from_string(field<std::string>(t, "role", what))};
        if (!fs::exists(path.parent_path() / e.path)) missing.push_back((path.parent_path() / e.path).string());
        m.trials.push_back(std::move(e));
    }
    validate_manifest(m);
    if (!missing.empty()) {
        std::string msg = what + ": missing trial files:";
        for (const auto& p : missing) msg += " " + p;
        throw ValidationError(msg);
    }
    return m;
}

inline std::vector<Trial> load_role(const fs::path& manifest_path, const DatasetManifest& m, TrialRole role) {
    std::vector<Trial> out;
    for (const auto& p : m.paths_with(role)) out.push_back(load_trial(manifest_path.parent_path() / p));
    return out;
}

// ---------------------------------------------------------------------------
// Plot-ready CSV exports

template <typename Matrix>
std::string matrix_to_csv(const std::vector<std::string>& header, const Matrix& m) {
    if (!header.empty() && static_cast<Eigen::Index>(header.size()) != m.cols()) {
        throw ValidationError("CSV header has " + std::to_string(header.size()) + " names for " +
                              std::to_string(m.cols()) + " columns");
    }
    std::string out;
    for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
    if (!header.empty()) out += "\n";
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (c) out += ",";
            if constexpr (std::is_integral_v<typename Matrix::Scalar>) {
                out += std::to_string(m(r, c));
            } else {
                out += format_double(m(r, c));
            }
        }
        out += "\n";
    }
    return out;
}

}  // namespace hmmev
