#include "cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "difflens/analytics.hpp"
#include "difflens/api.hpp"
#include "difflens/bundle.hpp"
#include "difflens/difficulty.hpp"
#include "difflens/error.hpp"
#include "difflens/flow.hpp"
#include "difflens/probes.hpp"
#include "difflens/projection.hpp"
#include "difflens/server.hpp"
#include "difflens/subsets.hpp"
#include "difflens/synth.hpp"
#include "difflens/text.hpp"

namespace difflens::cli {

using nlohmann::json;

namespace {

// Flags shared by compute, serve and export.
struct ConfigFlags {
    std::string config_file;
    std::size_t k = knn::kDefaultK;
    bool exact = false;
    std::string threshold_mode = "fixed";
    double quantile = 0.7;
    double data_threshold = 0.5;
    double model_threshold = 0.5;
    double human_threshold = 0.5;
    std::size_t trees = 16;
    std::size_t leaf_size = 32;
    std::uint64_t seed = 1;
    std::size_t pca_max_dims = 128;
    bool zscore = false;
    bool profile_train = false;

    void attach(CLI::App& app) {
        app.add_option("--config", config_file, "DifficultyConfig JSON; flags given explicitly override it")
            ->check(CLI::ExistingFile);
        app.add_option("--k", k, "Neighbors per k-NN probe")->capture_default_str();
        app.add_flag("--exact", exact, "Exact k-NN instead of the approximate forest");
        app.add_option("--threshold-mode", threshold_mode, "High/low cut points")
            ->check(CLI::IsMember({"fixed", "quantile"}))
            ->capture_default_str();
        app.add_option("--quantile", quantile, "Quantile used by --threshold-mode quantile")->capture_default_str();
        app.add_option("--data-threshold", data_threshold, "Fixed data-difficulty cut")->capture_default_str();
        app.add_option("--model-threshold", model_threshold, "Fixed model-difficulty cut")->capture_default_str();
        app.add_option("--human-threshold", human_threshold, "Fixed human-difficulty cut")->capture_default_str();
        app.add_option("--trees", trees, "Trees in the approximate index")->capture_default_str();
        app.add_option("--leaf-size", leaf_size, "Maximum leaf size of the approximate index")->capture_default_str();
        app.add_option("--seed", seed, "Index seed")->capture_default_str();
        app.add_option("--pca-max-dims", pca_max_dims, "Compress probe spaces wider than this")->capture_default_str();
        app.add_flag("--zscore", zscore, "Standardize probe spaces before indexing");
        app.add_flag("--profile-train", profile_train, "Also profile the training split");
    }

    DifficultyConfig resolve(const CLI::App& app) const {
        DifficultyConfig c;
        if (!config_file.empty()) {
            std::ifstream in(config_file);
            json j;
            try {
                in >> j;
            } catch (const json::exception& e) {
                throw Error(ErrorKind::invalid_argument, std::string("config is not valid JSON: ") + e.what(), config_file);
            }
            c = config_from_json(j);
        }
        auto given = [&](const char* name) { return app.get_option(name)->count() > 0; };
        if (given("--k") || config_file.empty()) c.k = k;
        if (exact) c.probes.mode = knn::Mode::exact;
        if (given("--threshold-mode")) c.threshold_mode = threshold_mode == "quantile" ? ThresholdMode::quantile : ThresholdMode::fixed;
        if (given("--quantile")) c.quantile = quantile;
        if (given("--data-threshold")) c.fixed.data = data_threshold;
        if (given("--model-threshold")) c.fixed.model = model_threshold;
        if (given("--human-threshold")) c.fixed.human = human_threshold;
        if (given("--trees")) c.probes.forest.trees = trees;
        if (given("--leaf-size")) c.probes.forest.leaf_size = leaf_size;
        if (given("--seed")) c.probes.forest.seed = seed;
        if (given("--pca-max-dims")) c.probes.pca_max_dims = pca_max_dims;
        if (zscore) c.probes.zscore = true;
        if (profile_train) c.profile_train = true;
        if (const char* dir = std::getenv("DIFFLENS_CACHE_DIR"); dir && *dir) c.probes.cache_dir = dir;
        validate_config(c);
        return c;
    }
};

// Usage problems discovered after parsing (bad values, bad combinations).
struct UsageError : std::runtime_error {
    std::string where;
    UsageError(std::string msg, std::string w) : std::runtime_error(std::move(msg)), where(std::move(w)) {}
};

void error_line(std::ostream& err, std::string_view kind, std::string_view where, std::string_view message) {
    err << json{{"error", kind}, {"where", where}, {"message", message}}.dump(-1, ' ', false, json::error_handler_t::replace)
        << "\n";
}

std::string read_text(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

void write_output(const std::string& path, const std::string& text, std::ostream& out) {
    if (path.empty() || path == "-") {
        out << text;
        return;
    }
    write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

struct Computed {
    BundlePtr bundle;
    std::shared_ptr<const ProbeSet> probes;
    ProfileTable table;
};

Computed run_pipeline(const std::string& dir, const DifficultyConfig& config, std::ostream& err) {
    Computed c;
    c.bundle = load_bundle(dir);
    const auto& m = c.bundle->manifest();
    const std::size_t max_k = config.profile_train ? m.n_train - 1 : m.n_train;
    if (config.k > max_k) throw UsageError("k exceeds the available training neighbors (" + std::to_string(max_k) + ")", "--k");
    err << "difflens: building " << m.num_probes() << " probe indices\n";
    c.probes = std::make_shared<const ProbeSet>(ProbeSet::build(c.bundle, config.probes));
    err << "difflens: profiling\n";
    c.table = compute_profiles(*c.bundle, *c.probes, config);
    return c;
}

std::string summary_text(const RunSummary& s, const Manifest& m) {
    std::ostringstream o;
    o << "dataset: " << m.dataset_name << "\n";
    o << "instances: " << s.instances << "\n";
    o << "correct: " << s.correct << "\n";
    o << "accuracy: " << format_real(s.accuracy) << "\n";
    o << "mean_data_difficulty: " << format_real(s.mean_data) << "\n";
    o << "mean_model_difficulty: " << format_real(s.mean_model) << "\n";
    o << "mean_human_difficulty: " << (s.mean_human ? format_real(*s.mean_human) : "absent") << "\n";
    o << "human_present: " << s.human_present << "\n";
    o << "never_aligned: " << s.never_aligned << "\n";
    o << "patterns:\n";
    for (const auto& [code, n] : s.patterns) o << "  " << code << ": " << n << "\n";
    return o.str();
}

json summary_json(const RunSummary& s) {
    return json{{"instances", s.instances},
                {"correct", s.correct},
                {"accuracy", s.accuracy},
                {"mean_data", s.mean_data},
                {"mean_model", s.mean_model},
                {"mean_human", s.mean_human ? json(*s.mean_human) : json(nullptr)},
                {"human_present", s.human_present},
                {"never_aligned", s.never_aligned},
                {"patterns", s.patterns}};
}

std::vector<std::size_t> rows_for(const ProfileTable& table, const std::string& subset_file) {
    if (subset_file.empty()) return all_rows(table);
    const auto members = members_from_csv(read_text(subset_file));
    std::vector<std::size_t> rows;
    for (const auto& ref : members) {
        auto row = table.find(ref);
        if (!row) throw Error(ErrorKind::validation, "subset member " + instance_id(ref) + " is not profiled", subset_file);
        rows.push_back(*row);
    }
    std::sort(rows.begin(), rows.end());
    return rows;
}

std::string filtered_profiles_csv(const ProfileTable& table, const std::vector<std::size_t>& rows) {
    ProfileTable sub;
    sub.thresholds = table.thresholds;
    sub.num_probes = table.num_probes;
    sub.k = table.k;
    for (auto r : rows) {
        sub.profiles.push_back(table.profiles[r]);
        sub.traces.push_back(table.traces[r]);
    }
    return profiles_csv(sub);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"difflens: instance difficulty analysis across data, model and human perspectives", "difflens"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "difflens 0.1.0");

    // validate
    std::string bundle_dir;
    bool validate_json = false;
    auto* validate = app.add_subcommand("validate", "Check a bundle and list every violation");
    validate->add_option("bundle", bundle_dir, "Bundle directory")->required();
    validate->add_flag("--json", validate_json, "Print violations as JSON");

    // synth gen
    std::string spec_file, synth_out;
    auto* synth = app.add_subcommand("synth", "Synthetic bundles with planted difficulty patterns");
    synth->require_subcommand(1);
    auto* gen = synth->add_subcommand("gen", "Generate a bundle from a spec");
    gen->add_option("spec", spec_file, "Generator spec JSON")->required()->check(CLI::ExistingFile);
    gen->add_option("-o,--out", synth_out, "Output bundle directory")->required();

    // compute
    ConfigFlags compute_flags;
    std::string profiles_out, compute_summary_out;
    bool compute_json = false;
    auto* compute = app.add_subcommand("compute", "Profile every test instance and print a summary");
    compute->add_option("bundle", bundle_dir, "Bundle directory")->required();
    compute_flags.attach(*compute);
    compute->add_option("--out", profiles_out, "Write profiles CSV here");
    compute->add_flag("--json", compute_json, "Print the summary as JSON");

    // serve
    ConfigFlags serve_flags;
    int port = 8642;
    std::string host = "127.0.0.1", static_dir, subsets_file;
    bool precompute = false;
    auto* serve = app.add_subcommand("serve", "Run the HTTP JSON API");
    serve->add_option("bundle", bundle_dir, "Bundle directory")->required();
    serve->add_option("--port", port, "Listen port (0 picks a free one)")->capture_default_str()->check(CLI::Range(0, 65535));
    serve->add_option("--host", host, "Listen address")->capture_default_str();
    serve->add_flag("--precompute", precompute, "Compute profiles before accepting requests");
    serve->add_option("--static", static_dir, "Serve UI assets from this directory")->check(CLI::ExistingDirectory);
    serve->add_option("--subsets", subsets_file, "Subset store file (default <bundle>/subsets.json)");
    serve_flags.attach(*serve);

    // export
    ConfigFlags export_flags;
    std::string what, export_subset, export_out, source = "pattern";
    auto* exp = app.add_subcommand("export", "Write profiles, flow or projection data");
    exp->add_option("bundle", bundle_dir, "Bundle directory")->required();
    exp->add_option("--what", what, "Artifact")->required()->check(CLI::IsMember({"profiles", "flow", "projection"}));
    exp->add_option("--subset", export_subset, "Restrict to the ids in this CSV (instance_id column)")
        ->check(CLI::ExistingFile);
    exp->add_option("--source", source, "Projection source: pixel, pattern or layer:<name>")->capture_default_str();
    exp->add_option("--out", export_out, "Output file (default stdout)");
    export_flags.attach(*exp);

    std::vector<std::string> argv(args.rbegin(), args.rend());
    try {
        app.parse(argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return ok;
    } catch (const CLI::CallForVersion&) {
        out << app.version() << "\n";
        return ok;
    } catch (const CLI::ParseError& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        error_line(err, "usage", e.get_name(), msg);
        return usage_error;
    }

    try {
        if (validate->parsed()) {
            const auto report = validate_bundle(bundle_dir);
            if (validate_json) {
                json list = json::array();
                for (const auto& v : report.violations) {
                    list.push_back({{"kind", to_string(v.kind)}, {"file", v.file}, {"location", v.location}, {"message", v.message}});
                }
                out << json{{"ok", report.ok()}, {"violations", list}}.dump(2) << "\n";
            } else {
                for (const auto& v : report.violations) {
                    out << to_string(v.kind) << "\t" << v.file << "\t" << v.location << "\t" << v.message << "\n";
                }
            }
            if (!report.ok()) {
                const auto& v = report.violations.front();
                error_line(err, "validation", v.location.empty() ? v.file : v.file + ": " + v.location, v.message);
                return validation_failure;
            }
            const auto bundle = load_bundle(bundle_dir);
            if (!validate_json) out << "ok checksum=" << bundle->checksum() << "\n";
            return ok;
        }

        if (gen->parsed()) {
            json j;
            try {
                j = json::parse(read_text(spec_file));
            } catch (const json::parse_error& e) {
                throw UsageError(std::string("spec is not valid JSON: ") + e.what(), spec_file);
            }
            synth::SynthSpec spec;
            try {
                spec = synth::spec_from_json(j);
            } catch (const Error& e) {
                throw UsageError(e.what(), e.where().empty() ? spec_file : spec_file + ": " + e.where());
            } catch (const json::exception& e) {
                throw UsageError(e.what(), spec_file);
            }
            const auto result = synth::generate_to(spec, synth_out);
            out << "wrote " << synth_out << " (" << result.data.train_labels.size() << " train, "
                << result.data.test_labels.size() << " test)\n";
            return ok;
        }

        if (compute->parsed()) {
            const auto config = compute_flags.resolve(*compute);
            const auto c = run_pipeline(bundle_dir, config, err);
            if (!profiles_out.empty()) write_output(profiles_out, profiles_csv(c.table), out);
            const auto summary = summarize(c.table, all_rows(c.table));
            if (compute_json) {
                out << summary_json(summary).dump(2) << "\n";
            } else {
                out << summary_text(summary, c.bundle->manifest());
            }
            return ok;
        }

        if (serve->parsed()) {
            const auto config = serve_flags.resolve(*serve);
            auto bundle = load_bundle(bundle_dir);
            ApiOptions options;
            options.subsets_path = subsets_file.empty() ? std::filesystem::path(bundle_dir) / "subsets.json"
                                                        : std::filesystem::path(subsets_file);
            ApiService service(bundle, options);
            for (const auto& w : service.warnings()) err << "difflens: warning: " << w << "\n";
            if (precompute) {
                err << "difflens: computing profiles\n";
                service.compute(config, true);
                if (service.state() != ComputeState::ready) {
                    throw Error(ErrorKind::io, "precompute failed", bundle_dir);
                }
            }
            ServerOptions so;
            so.host = host;
            so.port = port;
            if (!static_dir.empty()) so.static_dir = static_dir;
            HttpServer server(service, so);
            const int bound = server.bind();
            // one machine-readable line so wrappers can find the port
            out << "listening http://" << host << ":" << bound << std::endl;
            server.listen();
            return ok;
        }

        if (exp->parsed()) {
            const auto config = export_flags.resolve(*exp);
            const auto c = run_pipeline(bundle_dir, config, err);
            const auto rows = rows_for(c.table, export_subset);
            const auto& t = c.table;
            std::string text;
            if (what == "profiles") {
                text = filtered_profiles_csv(t, rows);
            } else if (what == "flow") {
                if (rows.empty()) throw UsageError("subset is empty", "--subset");
                auto id_of = [&](std::size_t r) { return instance_id(t.profiles[r].ref); };
                text = flow_to_json(build_flow(t, rows, c.bundle->manifest().num_classes()), id_of).dump(2) + "\n";
            } else {
                ProjectionSource src;
                try {
                    src = ProjectionSource::parse(source, c.bundle->manifest());
                } catch (const Error& e) {
                    throw UsageError(e.what(), "--source");
                }
                const auto proj = project_2d(*c.bundle, t, src);
                std::string csv = "instance_id,x,y\n";
                for (auto r : rows) {
                    csv += csv_line({instance_id(t.profiles[r].ref), format_real(proj.coords[r][0]),
                                     format_real(proj.coords[r][1])});
                }
                text = csv;
            }
            write_output(export_out, text, out);
            return ok;
        }
    } catch (const UsageError& e) {
        error_line(err, "usage", e.where, e.what());
        return usage_error;
    } catch (const Error& e) {
        error_line(err, to_string(e.kind()), e.where(), e.what());
        switch (e.kind()) {
            case ErrorKind::validation: return validation_failure;
            case ErrorKind::invalid_argument: return usage_error;
            default: return runtime_failure;
        }
    } catch (const std::exception& e) {
        error_line(err, "internal", "", e.what());
        return runtime_failure;
    }
    return usage_error;
}

}  // namespace difflens::cli
