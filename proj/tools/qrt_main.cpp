// qrt: red-team workbench CLI.
//   run      execute a campaign config, render the report
//   replay   re-execute one recorded fuzz case
//   baseline fit an anomaly detector on honest sessions, write the blob
//   report   re-render a stored JSON report

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "qrt/campaign.hpp"

namespace fs = std::filesystem;
using qrt::ReportFormat;

namespace {

void write_file(const fs::path& path, const void* data, size_t size) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(static_cast<const char*>(data), std::streamsize(size));
    if (!out) throw std::runtime_error("short write to " + path.string());
}

int cmd_run(const std::string& config_path, uint64_t seed, bool seed_set,
            const std::string& out_path, const std::string& format) {
    qrt::CampaignConfig config = qrt::load_campaign_config(config_path);
    if (seed_set) config.master_seed = seed;

    const qrt::CampaignReport report = qrt::run_campaign(config);
    const ReportFormat fmt = format == "text" ? ReportFormat::Text : ReportFormat::Json;
    const std::string rendered = qrt::render_report(report, fmt);

    std::string target = out_path.empty() ? config.output_path : out_path;
    if (target.empty()) {
        std::cout << rendered;
    } else {
        const fs::path report_path(target);
        write_file(report_path, rendered.data(), rendered.size());
        const fs::path dir = report_path.parent_path();
        const fs::path telemetry = report_path.string() + ".telemetry.csv";
        write_file(telemetry, report.telemetry_csv.data(), report.telemetry_csv.size());
        for (const qrt::Artifact& a : report.artifacts)
            write_file(dir / a.name, a.bytes.data(), a.bytes.size());
        std::cout << "report: " << report_path.string() << "\n";
        std::cout << "telemetry: " << telemetry.string() << "\n";
        for (const qrt::Artifact& a : report.artifacts)
            std::cout << "artifact: " << (dir / a.name).string() << "\n";
        std::cout << "exit code: " << report.exit_code << "\n";
    }
    return report.exit_code;
}

int cmd_replay(const std::string& case_path) {
    const qrt::ReplayCase rc = qrt::read_replay_file(case_path);
    const auto dialogue = qrt::apply_case(rc.target, rc.fc);
    const qrt::FuzzVerdict verdict = qrt::evaluate_dialogue(rc.target, dialogue, rc.step_budget);
    std::cout << "case " << rc.fc.case_id << " seed " << rc.fc.seed << " mutations "
              << rc.fc.mutations.size() << " -> " << qrt::fuzz_verdict_name(verdict) << "\n";
    return qrt::is_invariant_violation(verdict) ? 2 : 0;
}

int cmd_baseline(uint32_t sessions, const std::string& out_path, uint64_t seed,
                 const std::string& detector) {
    if (sessions < 64) throw std::runtime_error("baseline: need at least 64 sessions");
    const qrt::SessionConfig session;
    const qrt::ChannelParams channel;
    std::vector<qrt::FeatureVector> features;
    features.reserve(sessions);
    for (uint32_t i = 0; i < sessions; ++i) {
        const qrt::SessionResult r = qrt::run_session(
            session, channel, nullptr, qrt::derive_seed(seed, 1, i, 0), i);
        features.push_back(qrt::telemetry_features(r.telemetry));
    }
    const qrt::DetectorKind kind =
        detector == "pca" ? qrt::DetectorKind::Pca : qrt::DetectorKind::Forest;
    qrt::RngStream fit_rng(qrt::derive_seed(seed, 2, 0, 0));
    const qrt::DetectorModel model = qrt::fit(features, kind, qrt::FitParams{}, fit_rng);
    const double threshold = qrt::calibrate_alert_threshold(model, features);
    const std::vector<uint8_t> blob = qrt::serialize_model(model);
    write_file(out_path, blob.data(), blob.size());
    std::cout << "detector: " << detector << "\n";
    std::cout << "sessions: " << sessions << "\n";
    std::cout << "alert threshold: " << threshold << "\n";
    std::cout << "digest: " << qrt::model_digest(model) << "\n";
    std::cout << "blob: " << out_path << " (" << blob.size() << " bytes)\n";
    return 0;
}

int cmd_report(const std::string& in_path, const std::string& format) {
    std::ifstream in(in_path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open report: " + in_path);
    std::ostringstream ss;
    ss << in.rdbuf();
    const nlohmann::ordered_json j = nlohmann::ordered_json::parse(ss.str());
    if (format == "json") {
        std::cout << j.dump(2) << "\n";
        return 0;
    }
    std::printf("campaign report %s  master_seed=%llu  config=%s\n",
                j.value("version", std::string("?")).c_str(),
                (unsigned long long)j.value("master_seed", 0ull),
                j.value("config_digest", std::string("?")).c_str());
    for (const auto& s : j.value("scenarios", nlohmann::ordered_json::array())) {
        std::printf("scenario %u  %s (%s)  verdict=%s  iterations=%u\n",
                    s.value("index", 0u), s.value("name", std::string("?")).c_str(),
                    s.value("kind", std::string("?")).c_str(),
                    s.value("verdict", std::string("?")).c_str(), s.value("iterations_run", 0u));
        for (const auto& it : s.value("iterations", nlohmann::ordered_json::array())) {
            const auto findings = it.value("findings", nlohmann::ordered_json::array());
            std::printf("  iteration %u: %zu finding(s)\n", it.value("iteration", 0u),
                        findings.size());
            for (const auto& f : findings)
                std::printf("    [%s] %s: %s\n", f.value("severity", std::string("?")).c_str(),
                            f.value("kind", std::string("?")).c_str(),
                            f.value("description", std::string("?")).c_str());
            if (it.contains("remediation"))
                std::printf("    remediation: %s (%s)\n",
                            it.at("remediation").value("action", std::string("?")).c_str(),
                            it.at("remediation").value("description", std::string("?")).c_str());
        }
    }
    std::printf("artifacts: %zu  telemetry bytes: %llu\n",
                j.value("artifacts", nlohmann::ordered_json::array()).size(),
                (unsigned long long)j.value("telemetry_bytes", 0ull));
    std::printf("exit code: %d\n", j.value("exit_code", 0));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic QKD red-team workbench"};
    app.require_subcommand(1);

    std::string config_path, out_path, format = "json";
    uint64_t seed = 0;
    auto* run = app.add_subcommand("run", "execute a campaign config");
    run->add_option("--config", config_path, "campaign config JSON")->required();
    auto* seed_opt = run->add_option("--seed", seed, "override the config master seed");
    run->add_option("--out", out_path, "write the report here instead of stdout");
    run->add_option("--format", format, "json or text")
        ->check(CLI::IsMember({"json", "text"}));

    std::string case_path;
    auto* replay = app.add_subcommand("replay", "re-execute one fuzz replay file");
    replay->add_option("--case", case_path, "replay file (.qrtf)")->required();

    uint32_t sessions = 128;
    std::string blob_path, detector = "forest";
    uint64_t baseline_seed = 1;
    auto* baseline = app.add_subcommand("baseline", "fit an anomaly detector on honest sessions");
    baseline->add_option("--sessions", sessions, "number of honest sessions (>= 64)");
    baseline->add_option("--out", blob_path, "detector blob output path")->required();
    baseline->add_option("--seed", baseline_seed, "session seed base");
    baseline->add_option("--detector", detector, "forest or pca")
        ->check(CLI::IsMember({"forest", "pca"}));

    std::string report_in, report_format = "text";
    auto* report = app.add_subcommand("report", "re-render a stored JSON report");
    report->add_option("--in", report_in, "report JSON path")->required();
    report->add_option("--format", report_format, "text or json")
        ->check(CLI::IsMember({"text", "json"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path, seed, !seed_opt->empty(), out_path, format);
        if (replay->parsed()) return cmd_replay(case_path);
        if (baseline->parsed()) return cmd_baseline(sessions, blob_path, baseline_seed, detector);
        if (report->parsed()) return cmd_report(report_in, report_format);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
