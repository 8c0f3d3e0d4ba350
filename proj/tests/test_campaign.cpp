#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <string>
#include <variant>

#include "json.hpp"
#include "qrt/campaign.hpp"

using namespace qrt;

TEST_CASE("scenario kind names round-trip") {
    for (int i = 0; i <= int(ScenarioKind::RetroDecrypt); ++i) {
        const auto kind = ScenarioKind(i);
        CHECK(scenario_kind_from_name(scenario_kind_name(kind)) == kind);
    }
    CHECK(std::string(scenario_kind_name(ScenarioKind::QuantumExploit)) == "quantum_exploit");
    CHECK_THROWS(scenario_kind_from_name("quantum exploit"));
    CHECK(std::string(finding_kind_name(FindingKind::PnsUndetected)) == "pns_undetected");
    CHECK(std::string(remediation_action_name(RemediationAction::EnableDecoys)) ==
          "enable_decoys");
    CHECK(std::string(scenario_verdict_name(ScenarioVerdict::MitigatedAfterN)) ==
          "mitigated_after_n");
}

TEST_CASE("default scenarios encode the attack each one studies") {
    const ScenarioSpec trad = default_scenario(ScenarioKind::TraditionalPlaybook);
    CHECK(trad.name == "traditional_playbook");
    REQUIRE(std::holds_alternative<InterceptResend>(trad.adversary.kind));
    CHECK(std::get<InterceptResend>(trad.adversary.kind).fraction == 1.0);
    CHECK_NOTHROW(trad.validate());

    const ScenarioSpec pns = default_scenario(ScenarioKind::QuantumExploit);
    CHECK(pns.pns_auto_block);
    CHECK_FALSE(pns.session.decoy_enabled); // the finding the scenario is about
    CHECK(pns.channel.transmittance == 0.25);
    CHECK(std::holds_alternative<PhotonNumberSplit>(pns.adversary.kind));
    CHECK(pns.session.n_rounds >= 20000);
    CHECK_NOTHROW(pns.validate());

    const ScenarioSpec ml = default_scenario(ScenarioKind::AdversarialMl);
    CHECK(ml.channel.depolarize_prob > 0.0); // detector needs benign variance
    const ScenarioSpec mon = default_scenario(ScenarioKind::AnomalyMonitor);
    CHECK(mon.channel.depolarize_prob > 0.0);

    const ScenarioSpec ai = default_scenario(ScenarioKind::AiRedTeam);
    REQUIRE(std::holds_alternative<Adaptive>(ai.adversary.kind));
    CHECK(std::get<Adaptive>(ai.adversary.kind).arms.size() >= 3);

    for (int i = 0; i <= int(ScenarioKind::RetroDecrypt); ++i)
        CHECK_NOTHROW(default_scenario(ScenarioKind(i)).validate());
}

TEST_CASE("config parsing is strict and overlays scenario defaults") {
    const CampaignConfig c = campaign_config_from_json_text(R"({
        "master_seed": 5,
        "scenarios": [
            {"kind": "traditional_playbook", "repetitions": 3,
             "session": {"n_rounds": 1234}},
            {"kind": "protocol_fuzz",
             "fuzz": {"cases": 500, "plant_accept_reordered_parity": true}}
        ]
    })");
    CHECK(c.master_seed == 5);
    CHECK(c.max_remediation_iters == 3); // default preserved
    REQUIRE(c.scenarios.size() == 2);
    CHECK(c.scenarios[0].repetitions == 3);
    CHECK(c.scenarios[0].session.n_rounds == 1234);
    CHECK(c.scenarios[0].session.qber_abort_threshold == 0.11); // untouched default
    CHECK(c.scenarios[1].fuzz.cases == 500);
    CHECK(c.scenarios[1].fuzz.plant_accept_reordered_parity);
    CHECK_FALSE(c.scenarios[1].fuzz.plant_skip_digest_length_check);

    CHECK_THROWS(campaign_config_from_json_text("not json"));
    CHECK_THROWS(campaign_config_from_json_text(R"({"scenarios": []})"));
    CHECK_THROWS(campaign_config_from_json_text(
        R"({"scenarios": [{"kind": "traditional_playbook"}], "surprise": 1})"));
    CHECK_THROWS(campaign_config_from_json_text(
        R"({"scenarios": [{"kind": "traditional_playbook", "sessionn": {}}]})"));
    CHECK_THROWS(campaign_config_from_json_text(R"({"scenarios": [{"kind": "warp_drive"}]})"));
    CHECK_THROWS(campaign_config_from_json_text(
        R"({"scenarios": [{"kind": "side_channel", "sidechannel": {"noise_sigma": -1}}]})"));
}

TEST_CASE("retro decryption marks exactly the classical-wrapped payloads") {
    std::vector<StoredPayload> stored{
        {1, 100, SigScheme::Classical, "aa"},
        {2, 101, SigScheme::PostQuantum, "bb"},
        {3, 102, SigScheme::Classical, "cc"},
    };
    AdversaryPower quantum;
    quantum.quantum = true;
    const auto v = retro_decrypt(stored, quantum);
    REQUIRE(v.size() == 3);
    CHECK(v[0].compromised);
    CHECK_FALSE(v[1].compromised);
    CHECK(v[2].compromised);
    CHECK(v[0].session_id == 1);
    CHECK(v[2].harvest_epoch == 102);

    AdversaryPower mundane;
    for (const auto& r : retro_decrypt(stored, mundane)) CHECK_FALSE(r.compromised);
}

TEST_CASE("remediation applies one prioritized rule per call") {
    SessionConfig session;
    session.decoy_enabled = false;
    LeakModel leak;

    Finding pns;
    pns.kind = FindingKind::PnsUndetected;
    Finding eaves;
    eaves.kind = FindingKind::UndetectedEavesdropping;
    Finding mismatch;
    mismatch.kind = FindingKind::FuzzKeyMismatch;
    Finding dpa;
    dpa.kind = FindingKind::SideChannelKeyRecovery;

    // decoys outrank everything else
    const Remediation r1 = remediate({mismatch, pns, eaves}, session, leak);
    CHECK(r1.action == RemediationAction::EnableDecoys);
    CHECK(r1.session.decoy_enabled);

    // with decoys already on, the qber threshold drops by 0.02 with a floor
    const Remediation r2 = remediate({eaves}, r1.session, leak);
    CHECK(r2.action == RemediationAction::LowerQberThreshold);
    CHECK(r2.session.qber_abort_threshold == 0.09);
    SessionConfig near_floor = r2.session;
    near_floor.qber_abort_threshold = 0.07;
    CHECK(remediate({eaves}, near_floor, leak).session.qber_abort_threshold == 0.05);
    SessionConfig at_floor = near_floor;
    at_floor.qber_abort_threshold = 0.05;
    CHECK(remediate({eaves}, at_floor, leak).action == RemediationAction::NoChange);

    const Remediation r3 = remediate({mismatch}, session, leak);
    CHECK(r3.action == RemediationAction::StrictDigestVerification);
    CHECK(r3.session.postproc.strict_digest_verification);
    CHECK(remediate({mismatch}, r3.session, leak).action !=
          RemediationAction::StrictDigestVerification);

    const Remediation r4 = remediate({dpa}, session, leak);
    CHECK(r4.action == RemediationAction::ZeroLeakWeight);
    CHECK(r4.leak.leak_weight == 0.0);
    CHECK(remediate({dpa}, session, r4.leak).action == RemediationAction::NoChange);

    CHECK(remediate({}, session, leak).action == RemediationAction::NoChange);
    Finding hndl;
    hndl.kind = FindingKind::HarvestNowDecryptLater;
    CHECK(remediate({hndl}, session, leak).action == RemediationAction::NoChange);
}

TEST_CASE("forensics attribute the strategy behind a transcript") {
    SessionConfig cfg;
    cfg.n_rounds = 4000;
    cfg.decoy_enabled = false;
    cfg.mu_signal = 16.0;
    cfg.qber_abort_threshold = 0.45; // let the interception complete
    ChannelParams channel;

    AdversaryStrategy eve(InterceptResend{1.0, BasisPolicy::RandomBasis});
    const SessionResult attacked = run_session(cfg, channel, &eve, 3, 21);
    const ForensicSummary fs =
        forensic_trace(attacked.transcript, attacked.eve, attacked.telemetry);
    CHECK(fs.attributed_strategy == "intercept_resend");
    CHECK(fs.eve_information_fraction > 0.3);
    CHECK(fs.compromised_round_count > 0);
    CHECK(fs.evidence.count("touched_fraction") == 1);
    CHECK(fs.evidence.at("touched_fraction") > 0.9);

    const SessionResult honest = run_session(cfg, channel, nullptr, 4, 22);
    const ForensicSummary hs = forensic_trace(honest.transcript, honest.eve, honest.telemetry);
    CHECK(hs.attributed_strategy == "none");
    CHECK(hs.eve_information_fraction == 0.0);
    CHECK(hs.compromised_round_count == 0);
}

TEST_CASE("campaigns run the pipeline per scenario and report findings") {
    const CampaignConfig config = campaign_config_from_json_text(R"({
        "master_seed": 7,
        "scenarios": [
            {"kind": "traditional_playbook", "repetitions": 3,
             "session": {"n_rounds": 2000}},
            {"kind": "retro_decrypt", "repetitions": 2,
             "session": {"n_rounds": 1000}},
            {"kind": "protocol_fuzz",
             "fuzz": {"cases": 2000, "plant_accept_reordered_parity": true}}
        ]
    })");
    const CampaignReport report = run_campaign(config);

    REQUIRE(report.scenarios.size() == 3);
    CHECK(report.master_seed == 7);
    CHECK_FALSE(report.version.empty());
    CHECK_FALSE(report.config_digest.empty());
    CHECK(report.wall_clock_seconds == 0.0);

    // full interception always trips the qber gate, so nothing is exploitable
    CHECK(report.scenarios[0].verdict == ScenarioVerdict::Resilient);
    CHECK(report.scenarios[0].iterations_run == 1);

    // classically wrapped payloads against a quantum adversary cannot be
    // remediated by any protocol knob
    CHECK(report.scenarios[1].verdict == ScenarioVerdict::VulnerableUnmitigated);
    REQUIRE_FALSE(report.scenarios[1].iterations.empty());
    bool saw_hndl = false;
    for (const auto& f : report.scenarios[1].iterations[0].findings)
        if (f.kind == FindingKind::HarvestNowDecryptLater) saw_hndl = true;
    CHECK(saw_hndl);

    // the reordered-parity bug has no remediation rule either, and it ships
    // a replay artifact
    CHECK(report.scenarios[2].verdict == ScenarioVerdict::VulnerableUnmitigated);
    std::string artifact_name;
    for (const auto& f : report.scenarios[2].iterations[0].findings)
        if (!f.replay_artifact.empty()) artifact_name = f.replay_artifact;
    REQUIRE_FALSE(artifact_name.empty());
    bool artifact_present = false;
    for (const auto& a : report.artifacts)
        if (a.name == artifact_name && !a.bytes.empty()) artifact_present = true;
    CHECK(artifact_present);

    CHECK(report.exit_code == 2);

    // every iteration logs all seven stages in pipeline order
    const std::vector<std::string> stages{"threat_model",      "environment_setup",
                                          "model_training",    "red_team",
                                          "anomaly_detection", "forensics",
                                          "remediation"};
    size_t cursor = 0;
    for (const auto& e : report.events) {
        CHECK(e.seq == cursor);
        ++cursor;
    }
    for (uint32_t s = 0; s < report.scenarios.size(); ++s) {
        for (uint32_t it = 0; it < report.scenarios[s].iterations_run; ++it) {
            std::vector<std::string> seen;
            for (const auto& e : report.events)
                if (e.scenario_index == s && e.iteration == it) seen.push_back(e.stage);
            REQUIRE(seen.size() == stages.size());
            CHECK(seen == stages);
        }
    }

    CHECK(report.telemetry_csv.rfind("session_id,seed,", 0) == 0);

    // reports are canonical: a rerun of the same config renders identically
    const std::string json_a = render_report(report, ReportFormat::Json);
    const std::string json_b = render_report(run_campaign(config), ReportFormat::Json);
    CHECK(json_a == json_b);

    const nlohmann::json parsed = nlohmann::json::parse(json_a);
    CHECK(parsed.at("master_seed").get<uint64_t>() == 7);
    CHECK(parsed.at("exit_code").get<int>() == 2);
    CHECK(parsed.at("scenarios").size() == 3);
    CHECK(parsed.at("scenarios")[2].at("verdict").get<std::string>() ==
          "vulnerable_unmitigated");

    const std::string text = render_report(report, ReportFormat::Text);
    CHECK(text.find("traditional_playbook") != std::string::npos);
    CHECK(text.find("vulnerable_unmitigated") != std::string::npos);
}

TEST_CASE("planted digest bug is found and remediated within the budget") {
    const CampaignConfig config = campaign_config_from_json_text(R"({
        "master_seed": 7,
        "scenarios": [
            {"kind": "protocol_fuzz",
             "fuzz": {"cases": 4000, "plant_skip_digest_length_check": true}}
        ]
    })");
    const CampaignReport report = run_campaign(config);
    REQUIRE(report.scenarios.size() == 1);
    const ScenarioReport& s = report.scenarios[0];
    CHECK(s.verdict == ScenarioVerdict::MitigatedAfterN);
    REQUIRE(s.iterations_run >= 2);
    bool saw_mismatch = false;
    for (const auto& f : s.iterations[0].findings)
        if (f.kind == FindingKind::FuzzKeyMismatch) saw_mismatch = true;
    CHECK(saw_mismatch);
    REQUIRE(s.iterations[0].remediation.has_value());
    CHECK(s.iterations[0].remediation->action == RemediationAction::StrictDigestVerification);
    CHECK(s.iterations.back().findings.empty());
    CHECK(report.exit_code == 0);
}

TEST_CASE("adaptive red teaming is contained by threshold tightening") {
    const CampaignConfig config = campaign_config_from_json_text(R"({
        "master_seed": 7,
        "scenarios": [{"kind": "ai_red_team", "repetitions": 10}]
    })");
    const CampaignReport report = run_campaign(config);
    REQUIRE(report.scenarios.size() == 1);
    const ScenarioReport& s = report.scenarios[0];
    CHECK(s.verdict == ScenarioVerdict::MitigatedAfterN);
    bool lowered = false;
    for (const auto& it : s.iterations)
        if (it.remediation && it.remediation->action == RemediationAction::LowerQberThreshold)
            lowered = true;
    CHECK(lowered);
    CHECK(report.exit_code == 0);
}
