// cdsrank: constrained dominant-sets clustering and retrieval re-ranking.
//
// Subcommands: cluster, rerank, expand (= rerank --expand), eval, synth,
// sweep. Exit codes: 0 success, 2 input/parse error, 3 numerical error.
// stdout carries only the machine-readable payload; diagnostics go to
// stderr. CDSRANK_THREADS caps per-probe parallelism (0 or unset = auto).

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cdsrank/dataset_io.hpp"
#include "cdsrank/errors.hpp"
#include "cdsrank/eval.hpp"
#include "cdsrank/rng.hpp"

namespace {

using nlohmann::ordered_json;

struct RunConfig {
    double alpha_margin = 0.05;
    double tol = 1e-7;
    int max_iter = 10000;
    double theta = 1e-5;
    double beta = 0.9;
    double delta = 0.3;
    int k_expand = -1;  // < 0 means unset
    std::string metric = "dot";
    std::uint64_t seed = 0;
    bool normalize = false;
    int expand_count = 1;

    cdsrank::SolveConfig solve() const {
        return cdsrank::SolveConfig{alpha_margin, tol, max_iter, theta, normalize};
    }

    cdsrank::Metric metric_enum() const {
        return metric == "cosine" ? cdsrank::Metric::cosine : cdsrank::Metric::dot;
    }

    void validate() const {
        if (alpha_margin <= 0) throw std::invalid_argument("alpha_margin must be > 0");
        if (tol <= 0) throw std::invalid_argument("tol must be > 0");
        if (theta < 0) throw std::invalid_argument("theta must be >= 0");
        if (max_iter < 1) throw std::invalid_argument("max_iter must be >= 1");
        if (beta < 0 || beta > 1) throw std::invalid_argument("beta must lie in [0,1]");
        if (expand_count < 1) throw std::invalid_argument("expand_count must be >= 1");
    }
};

// Adds every RunConfig field (with its default) to a subcommand. The
// returned map keys equal the config-file keys, used for precedence checks.
std::map<std::string, CLI::Option*> add_config_options(CLI::App* cmd, RunConfig& cfg) {
    std::map<std::string, CLI::Option*> opts;
    opts["alpha_margin"] = cmd->add_option("--alpha-margin", cfg.alpha_margin,
                                           "relative+absolute slack above lambda_max for alpha")
                               ->capture_default_str();
    opts["tol"] = cmd->add_option("--tol", cfg.tol, "replicator L1 stopping threshold")
                      ->capture_default_str();
    opts["max_iter"] = cmd->add_option("--max-iter", cfg.max_iter, "replicator iteration cap")
                           ->capture_default_str();
    opts["theta"] = cmd->add_option("--theta", cfg.theta, "support extraction threshold")
                        ->capture_default_str();
    opts["beta"] = cmd->add_option("--beta", cfg.beta, "fusion weight toward CDS membership")
                       ->capture_default_str();
    opts["delta"] = cmd->add_option("--delta", cfg.delta, "dissimilarity offset (Yd = delta - Y)")
                        ->capture_default_str();
    opts["k_expand"] =
        cmd->add_option("--k-expand", cfg.k_expand, "k-NN neighbourhood size for expansion")
            ->capture_default_str();
    opts["metric"] = cmd->add_option("--metric", cfg.metric, "affinity metric")
                         ->check(CLI::IsMember({"dot", "cosine"}))
                         ->capture_default_str();
    opts["seed"] =
        cmd->add_option("--seed", cfg.seed, "random seed for sampling")->capture_default_str();
    opts["normalize"] =
        cmd->add_flag("--normalize", cfg.normalize, "divide affinities by the max entry");
    opts["expand_count"] = cmd->add_option("--expand-count", cfg.expand_count,
                                           "extra constraints promoted during expansion")
                               ->capture_default_str();
    return opts;
}

// key=value config file ('#' comments). A key only applies when the matching
// flag was not given on the command line: flag > file > default.
void apply_config_file(const std::string& path, RunConfig& cfg,
                       const std::map<std::string, CLI::Option*>& opts) {
    std::ifstream in(path);
    if (!in) throw cdsrank::IoError(cdsrank::IoCode::open_failed, path, "cannot open config file");

    auto trim = [](std::string s) {
        const auto from = s.find_first_not_of(" \t");
        const auto to = s.find_last_not_of(" \t\r");
        return from == std::string::npos ? std::string() : s.substr(from, to - from + 1);
    };

    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw cdsrank::IoError(cdsrank::IoCode::parse_error, path, "expected key=value",
                                   lineno);
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));

        const auto it = opts.find(key);
        if (it == opts.end())
            throw cdsrank::IoError(cdsrank::IoCode::parse_error, path,
                                   "unknown config key '" + key + "'", lineno);
        if (it->second->count() > 0) continue;  // CLI flag wins

        try {
            if (key == "alpha_margin") cfg.alpha_margin = std::stod(value);
            else if (key == "tol") cfg.tol = std::stod(value);
            else if (key == "max_iter") cfg.max_iter = std::stoi(value);
            else if (key == "theta") cfg.theta = std::stod(value);
            else if (key == "beta") cfg.beta = std::stod(value);
            else if (key == "delta") cfg.delta = std::stod(value);
            else if (key == "k_expand") cfg.k_expand = std::stoi(value);
            else if (key == "metric") cfg.metric = value;
            else if (key == "seed") cfg.seed = std::stoull(value);
            else if (key == "normalize") cfg.normalize = (value == "1" || value == "true");
            else if (key == "expand_count") cfg.expand_count = std::stoi(value);
        } catch (const std::exception&) {
            throw cdsrank::IoError(cdsrank::IoCode::parse_error, path,
                                   "bad value for '" + key + "': '" + value + "'", lineno);
        }
        if (key == "metric" && cfg.metric != "dot" && cfg.metric != "cosine")
            throw cdsrank::IoError(cdsrank::IoCode::parse_error, path,
                                   "metric must be dot or cosine", lineno);
    }
}

int env_threads() {
    const char* raw = std::getenv("CDSRANK_THREADS");
    if (raw == nullptr || *raw == '\0') return 0;
    char* end = nullptr;
    const long v = std::strtol(raw, &end, 10);
    if (*end != '\0' || v < 0) throw std::invalid_argument("bad CDSRANK_THREADS value");
    return static_cast<int>(v);
}

// Writes the payload to the path, or to stdout when the path is empty.
void emit(const std::string& out_path, const std::string& payload) {
    if (out_path.empty()) {
        std::cout << payload;
        return;
    }
    std::ofstream out(out_path);
    if (!out)
        throw cdsrank::IoError(cdsrank::IoCode::open_failed, out_path,
                               "cannot open output file");
    out << payload;
    if (!out) throw cdsrank::IoError(cdsrank::IoCode::write_failed, out_path, "write failed");
}

cdsrank::VerificationScores uniform_scores(int m) {
    return cdsrank::VerificationScores{Eigen::MatrixXd::Ones(m, m), Eigen::MatrixXd::Zero(m, m)};
}

std::vector<cdsrank::RankedList> rank_rows(const Eigen::MatrixXd& scores) {
    std::vector<cdsrank::RankedList> lists;
    lists.reserve(scores.rows());
    for (int i = 0; i < scores.rows(); ++i) {
        std::vector<char> mask(scores.cols(), 1);
        mask[i] = 0;
        lists.push_back(cdsrank::rank_gallery(scores.row(i), i, mask));
    }
    return lists;
}

int cmd_cluster(const std::string& features_path, const std::vector<std::string>& probe_ids,
                const RunConfig& cfg, const std::string& out_path) {
    const cdsrank::GalleryIndex gallery = cdsrank::load_features(features_path);
    const cdsrank::AffinityMatrix a = cdsrank::build_affinity(gallery.items, cfg.metric_enum());

    std::vector<int> probes;
    for (const auto& id : probe_ids) {
        int idx = -1;
        for (int i = 0; i < gallery.size(); ++i)
            if (gallery.items[i].id == id) {
                idx = i;
                break;
            }
        if (idx < 0)
            throw cdsrank::IoError(cdsrank::IoCode::parse_error, features_path,
                                   "probe id '" + id + "' not found");
        probes.push_back(idx);
    }
    std::sort(probes.begin(), probes.end());
    probes.erase(std::unique(probes.begin(), probes.end()), probes.end());

    std::ostringstream payload;
    for (int idx : probes) {
        const cdsrank::CdsResult res = cdsrank::solve_cds(a, {idx}, cfg.solve());
        ordered_json j;
        j["probe"] = idx;
        j["id"] = gallery.items[idx].id;
        j["alpha"] = res.alpha;
        j["iterations"] = res.iterations;
        j["converged"] = res.converged;
        j["objective"] = res.objective;
        j["objective_unshifted"] = res.objective_unshifted;
        j["support"] = res.support;
        j["membership"] = std::vector<double>(res.membership.values().begin(),
                                              res.membership.values().end());
        payload << j.dump() << '\n';
        if (!res.converged)
            std::cerr << "warning: probe " << idx << " did not converge within " << cfg.max_iter
                      << " iterations\n";
    }
    emit(out_path, payload.str());
    return 0;
}

int cmd_rerank(const std::string& features_path, const std::string& scores_path, bool expand,
               const RunConfig& cfg, const std::string& out_path) {
    const cdsrank::GalleryIndex gallery = cdsrank::load_features(features_path);
    const cdsrank::AffinityMatrix a = cdsrank::build_affinity(gallery.items, cfg.metric_enum());
    const int m = gallery.size();
    const int threads = env_threads();

    cdsrank::MembershipMatrix y{Eigen::MatrixXd(m, m)};
    if (expand) {
        if (cfg.k_expand < 0)
            throw std::invalid_argument("k required for expansion: pass --k-expand");
        const auto results = cdsrank::constraint_expansion_all(a, cfg.k_expand, cfg.solve(),
                                                               cfg.expand_count, threads);
        int fallbacks = 0;
        for (int i = 0; i < m; ++i) {
            y.y.row(i) = results[i].result.membership.values().transpose();
            if (results[i].fallback) ++fallbacks;
        }
        if (fallbacks > 0)
            std::cerr << "note: expansion fell back to the single constraint for " << fallbacks
                      << " of " << m << " probes\n";
    } else {
        y = cdsrank::cds_similarity_matrix(a, cfg.solve(), threads);
    }

    cdsrank::VerificationScores v = uniform_scores(m);
    if (!scores_path.empty()) {
        v = cdsrank::load_scores(scores_path);
        if (v.s.rows() != m)
            throw cdsrank::IoError(cdsrank::IoCode::shape_mismatch, scores_path,
                                   "scores are " + std::to_string(v.s.rows()) + "x" +
                                       std::to_string(v.s.cols()) + " but the gallery has " +
                                       std::to_string(m) + " items");
    } else {
        std::cerr << "note: no scores file; using uniform verification scores\n";
    }

    const cdsrank::FusedScores fused = cdsrank::fuse(y, v, cfg.beta, cfg.delta);
    if (fused.degenerate_beta)
        std::cerr << "warning: beta=" << cfg.beta
                  << " zeroes one fusion factor; ranking scores are all zero\n";
    if (fused.negative_dissim_entries > 0)
        std::cerr << "note: " << fused.negative_dissim_entries
                  << " entries of (delta - Y) are negative\n";

    std::ostringstream payload;
    cdsrank::write_ranking(payload, rank_rows(fused.fs));
    emit(out_path, payload.str());
    return 0;
}

int cmd_eval(const std::string& ranking_path, const std::string& labels_path, int max_rank,
             const std::string& out_path) {
    const auto lists = cdsrank::load_ranking(ranking_path);
    const cdsrank::GalleryIndex gallery = cdsrank::load_features(labels_path);

    std::vector<cdsrank::QueryJudgment> judgments;
    judgments.reserve(lists.size());
    for (const auto& list : lists) judgments.push_back(cdsrank::make_judgment(gallery, list));

    const ordered_json metrics = cdsrank::metrics_json(judgments, max_rank);
    if (metrics["excluded"].get<int>() > 0)
        std::cerr << "note: " << metrics["excluded"] << " queries had no valid relevant item\n";
    emit(out_path, metrics.dump() + "\n");
    return 0;
}

int cmd_synth(int num_ids, int per_id, int dim, double noise, const RunConfig& cfg,
              const std::string& format, const std::string& out_path) {
    const cdsrank::GalleryIndex gallery =
        cdsrank::synth_generate(num_ids, per_id, dim, noise, cfg.seed);

    bool binary = format == "bin";
    if (format == "auto") {
        const auto dot = out_path.rfind('.');
        const std::string ext = dot == std::string::npos ? "" : out_path.substr(dot);
        binary = ext == ".bin" || ext == ".dcds";
    }
    if (binary)
        cdsrank::write_features_bin(out_path, gallery);
    else
        cdsrank::write_features_csv(out_path, gallery);
    std::cerr << "wrote " << gallery.size() << " items (dim " << gallery.dim() << ") to "
              << out_path << '\n';
    return 0;
}

int cmd_sweep(const std::string& features_path, const std::string& scores_path,
              const std::string& param, const std::vector<double>& values, bool expand,
              RunConfig cfg, const std::string& out_path) {
    if (values.empty()) throw std::invalid_argument("sweep needs at least one value");
    const cdsrank::GalleryIndex gallery = cdsrank::load_features(features_path);
    const cdsrank::AffinityMatrix a = cdsrank::build_affinity(gallery.items, cfg.metric_enum());
    const int m = gallery.size();
    const int threads = env_threads();

    cdsrank::VerificationScores v = uniform_scores(m);
    if (!scores_path.empty()) {
        v = cdsrank::load_scores(scores_path);
        if (v.s.rows() != m)
            throw cdsrank::IoError(cdsrank::IoCode::shape_mismatch, scores_path,
                                   "scores do not match the gallery size");
    }

    // beta and delta only touch the fusion step, so Y can be computed once.
    const bool reuse_y = param == "beta" || param == "delta";

    auto compute_y = [&](const RunConfig& c) {
        if (expand) {
            if (c.k_expand < 0)
                throw std::invalid_argument("k required for expansion: pass --k-expand");
            const auto results = cdsrank::constraint_expansion_all(a, c.k_expand, c.solve(),
                                                                   c.expand_count, threads);
            Eigen::MatrixXd y(m, m);
            for (int i = 0; i < m; ++i)
                y.row(i) = results[i].result.membership.values().transpose();
            return cdsrank::MembershipMatrix{std::move(y)};
        }
        return cdsrank::cds_similarity_matrix(a, c.solve(), threads);
    };

    std::optional<cdsrank::MembershipMatrix> shared_y;
    if (reuse_y) shared_y = compute_y(cfg);

    auto format_value = [](double x) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.17g", x);
        return std::string(buf);
    };

    std::ostringstream payload;
    payload << param << ",mAP\n";
    for (double value : values) {
        RunConfig c = cfg;
        if (param == "beta") c.beta = value;
        else if (param == "delta") c.delta = value;
        else if (param == "alpha_margin") c.alpha_margin = value;
        else if (param == "tol") c.tol = value;
        else if (param == "theta") c.theta = value;
        else if (param == "k_expand") c.k_expand = static_cast<int>(value);
        c.validate();

        if (!reuse_y) shared_y = compute_y(c);
        const cdsrank::MembershipMatrix& y = *shared_y;

        // Boundary conventions for the beta sweep: the multiplicative fusion
        // ranks identically for every beta in (0,1), so beta=0 reports the
        // pure verification-score ranking and beta=1 the pure CDS ranking.
        std::vector<cdsrank::RankedList> lists;
        if (c.beta == 0.0)
            lists = rank_rows(v.s);
        else if (c.beta == 1.0)
            lists = rank_rows(y.y);
        else
            lists = rank_rows(cdsrank::fuse(y, v, c.beta, c.delta).fs);

        std::vector<cdsrank::QueryJudgment> judgments;
        judgments.reserve(lists.size());
        for (const auto& list : lists) judgments.push_back(cdsrank::make_judgment(gallery, list));
        const auto result = cdsrank::mean_ap(judgments);
        payload << format_value(value) << ',' << format_value(result.map) << '\n';
    }
    emit(out_path, payload.str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"constrained dominant-sets clustering and retrieval re-ranking"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string features_path, scores_path, ranking_path, labels_path, out_path, config_path;
    std::vector<std::string> probe_ids;
    int max_rank = 10;
    int num_ids = 10, per_id = 4, dim = 64;
    double noise = 0.1;
    std::string synth_format = "auto";
    std::string sweep_param;
    std::vector<double> sweep_values;
    bool expand_flag = false;

    std::map<const CLI::App*, std::map<std::string, CLI::Option*>> config_opts;
    auto attach_common = [&](CLI::App* cmd) {
        config_opts[cmd] = add_config_options(cmd, cfg);
        cmd->add_option("--config", config_path, "key=value config file (flags take precedence)");
        cmd->add_option("-o,--output", out_path, "output file (default: stdout)");
    };

    CLI::App* cluster = app.add_subcommand("cluster", "solve CDS for selected probe ids");
    cluster->add_option("--features", features_path, "feature file (CSV or DCDS binary)")
        ->required();
    cluster->add_option("--probe", probe_ids, "probe id (repeatable; first matching item is used)")
        ->required();
    attach_common(cluster);

    CLI::App* rerank = app.add_subcommand("rerank", "rank every gallery item per probe");
    rerank->add_option("--features", features_path, "feature file (CSV or DCDS binary)")
        ->required();
    rerank->add_option("--scores", scores_path,
                       "verification scores (.json or CSV pair prefix); uniform if omitted");
    rerank->add_flag("--expand", expand_flag, "constraint expansion via k-NN pre-clustering");
    attach_common(rerank);

    CLI::App* expand = app.add_subcommand("expand", "rerank with constraint expansion");
    expand->add_option("--features", features_path, "feature file (CSV or DCDS binary)")
        ->required();
    expand->add_option("--scores", scores_path,
                       "verification scores (.json or CSV pair prefix); uniform if omitted");
    attach_common(expand);

    CLI::App* eval = app.add_subcommand("eval", "mAP/CMC for a ranking file");
    eval->add_option("--ranking", ranking_path, "JSON-lines ranking file")->required();
    eval->add_option("--labels", labels_path, "feature file carrying id/camera labels")
        ->required();
    eval->add_option("--max-rank", max_rank, "CMC curve length")->capture_default_str();
    attach_common(eval);

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic labelled gallery");
    synth->add_option("--num-ids", num_ids, "identity count")->capture_default_str();
    synth->add_option("--per-id", per_id, "images per identity")->capture_default_str();
    synth->add_option("--dim", dim, "feature dimension")->capture_default_str();
    synth->add_option("--noise", noise, "intra-identity noise std")->capture_default_str();
    synth->add_option("--format", synth_format, "output format")
        ->check(CLI::IsMember({"auto", "csv", "bin"}))
        ->capture_default_str();
    attach_common(synth);

    CLI::App* sweep = app.add_subcommand("sweep", "mAP across one config parameter");
    sweep->add_option("--features", features_path, "feature file (CSV or DCDS binary)")
        ->required();
    sweep->add_option("--scores", scores_path,
                      "verification scores (.json or CSV pair prefix); uniform if omitted");
    sweep->add_option("--param", sweep_param, "parameter to sweep")
        ->check(CLI::IsMember({"beta", "delta", "alpha_margin", "tol", "theta", "k_expand"}))
        ->required();
    sweep->add_option("--values", sweep_values, "comma-separated parameter values")
        ->delimiter(',')
        ->required();
    sweep->add_flag("--expand", expand_flag, "use the expansion path for Y");
    attach_common(sweep);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    CLI::App* active = app.get_subcommands().front();
    try {
        if (!config_path.empty()) apply_config_file(config_path, cfg, config_opts[active]);
        cfg.validate();

        if (active == cluster) return cmd_cluster(features_path, probe_ids, cfg, out_path);
        if (active == rerank) return cmd_rerank(features_path, scores_path, expand_flag, cfg, out_path);
        if (active == expand) return cmd_rerank(features_path, scores_path, true, cfg, out_path);
        if (active == eval) return cmd_eval(ranking_path, labels_path, max_rank, out_path);
        if (active == synth) {
            if (out_path.empty())
                throw std::invalid_argument("synth requires --output (refusing to dump a dataset to stdout)");
            return cmd_synth(num_ids, per_id, dim, noise, cfg, synth_format, out_path);
        }
        if (active == sweep)
            return cmd_sweep(features_path, scores_path, sweep_param, sweep_values, expand_flag,
                             cfg, out_path);
        std::cerr << "error: unknown subcommand\n";
        return 2;
    } catch (const cdsrank::SolverError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const cdsrank::IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}
