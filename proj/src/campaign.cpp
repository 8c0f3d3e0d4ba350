#include "qrt/campaign.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace qrt {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

template <class... Args>
std::string strf(const char* fmt, Args... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, fmt, args...);
    return buf;
}

uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex16(uint64_t v) { return strf("%016llx", (unsigned long long)v); }

// exact fraction of the sifted key the adversary holds: stolen photons are
// readable after basis announcement, intercepted bits only in the matching basis
double eve_known_fraction(const Transcript& tr, const EveRecord& eve) {
    if (tr.sifted_indices.empty()) return 0.0;
    size_t known = 0;
    for (uint32_t id : tr.sifted_indices) {
        if (id >= eve.rounds.size()) continue;
        const EveRoundRecord& r = eve.rounds[id];
        if (!r.touched) continue;
        if (r.photons_stolen > 0) {
            ++known;
        } else if (r.eve_bit && r.eve_basis && *r.eve_basis == tr.rounds[id].alice_basis) {
            ++known;
        }
    }
    return double(known) / double(tr.sifted_indices.size());
}

std::string adversary_label(const AdversaryStrategy& s) {
    if (auto* ir = std::get_if<InterceptResend>(&s.kind))
        return strf("intercept_resend(fraction=%.3g)", ir->fraction);
    if (auto* pns = std::get_if<PhotonNumberSplit>(&s.kind))
        return strf("photon_number_split(block=%.3g)", pns->block_prob);
    if (auto* f = std::get_if<FaultInject>(&s.kind))
        return strf("fault_inject(%s,rate=%.3g)",
                    f->fault == FaultKind::DetectorBlind ? "detector_blind" : "basis_flip",
                    f->rate);
    if (auto* a = std::get_if<Adaptive>(&s.kind))
        return strf("adaptive(%zu arms,eps=%.3g)", a->arms.size(), a->epsilon);
    return "none";
}

} // namespace

const char* scenario_kind_name(ScenarioKind k) {
    switch (k) {
        case ScenarioKind::TraditionalPlaybook: return "traditional_playbook";
        case ScenarioKind::AiRedTeam: return "ai_red_team";
        case ScenarioKind::QuantumExploit: return "quantum_exploit";
        case ScenarioKind::CryptoAssessment: return "crypto_assessment";
        case ScenarioKind::AdversarialMl: return "adversarial_ml";
        case ScenarioKind::ProtocolFuzz: return "protocol_fuzz";
        case ScenarioKind::SideChannel: return "side_channel";
        case ScenarioKind::AnomalyMonitor: return "anomaly_monitor";
        case ScenarioKind::RetroDecrypt: return "retro_decrypt";
    }
    return "unknown";
}

ScenarioKind scenario_kind_from_name(const std::string& name) {
    for (int k = 0; k <= int(ScenarioKind::RetroDecrypt); ++k)
        if (name == scenario_kind_name(ScenarioKind(k))) return ScenarioKind(k);
    throw std::invalid_argument("unknown scenario kind: " + name);
}

const char* finding_kind_name(FindingKind k) {
    switch (k) {
        case FindingKind::UndetectedEavesdropping: return "undetected_eavesdropping";
        case FindingKind::PnsUndetected: return "pns_undetected";
        case FindingKind::FuzzKeyMismatch: return "fuzz_key_mismatch";
        case FindingKind::FuzzStateDesync: return "fuzz_state_desync";
        case FindingKind::FuzzNonTermination: return "fuzz_non_termination";
        case FindingKind::FuzzPanic: return "fuzz_panic";
        case FindingKind::SideChannelKeyRecovery: return "side_channel_key_recovery";
        case FindingKind::DetectorEvasion: return "detector_evasion";
        case FindingKind::MonitoringGap: return "monitoring_gap";
        case FindingKind::WeakRandomness: return "weak_randomness";
        case FindingKind::LeakageAccounting: return "leakage_accounting";
        case FindingKind::HarvestNowDecryptLater: return "harvest_now_decrypt_later";
        case FindingKind::ForgeableAttestation: return "forgeable_attestation";
    }
    return "unknown";
}

const char* remediation_action_name(RemediationAction a) {
    switch (a) {
        case RemediationAction::NoChange: return "no_change";
        case RemediationAction::EnableDecoys: return "enable_decoys";
        case RemediationAction::LowerQberThreshold: return "lower_qber_threshold";
        case RemediationAction::StrictDigestVerification: return "strict_digest_verification";
        case RemediationAction::ZeroLeakWeight: return "zero_leak_weight";
    }
    return "unknown";
}

const char* scenario_verdict_name(ScenarioVerdict v) {
    switch (v) {
        case ScenarioVerdict::Resilient: return "resilient";
        case ScenarioVerdict::MitigatedAfterN: return "mitigated_after_n";
        case ScenarioVerdict::VulnerableUnmitigated: return "vulnerable_unmitigated";
    }
    return "unknown";
}

void ScenarioSpec::validate() const {
    if (repetitions == 0) throw std::invalid_argument("scenario: repetitions must be >= 1");
    if (repetitions > 10000) throw std::invalid_argument("scenario: repetitions must be <= 10000");
    session.validate();
    channel.validate();
    adversary.validate();
    if (fuzz.cases == 0) throw std::invalid_argument("scenario: fuzz cases must be >= 1");
    if (fuzz.step_budget == 0) throw std::invalid_argument("scenario: fuzz step budget must be >= 1");
    sidechan.leak.validate();
    if (sidechan.traces < 2) throw std::invalid_argument("scenario: side channel needs >= 2 traces");
    if (sidechan.key_bits == 0) throw std::invalid_argument("scenario: side channel key_bits must be >= 1");
    if (proofs.count == 0 || proofs.count > 64)
        throw std::invalid_argument("scenario: validator count must be in [1, 64]");
    if (!(proofs.tau > 0.5 && proofs.tau <= 1.0))
        throw std::invalid_argument("scenario: tau must be in (0.5, 1]");
    if (!(proofs.adversary_stake >= 0.0 && proofs.adversary_stake <= 1.0))
        throw std::invalid_argument("scenario: adversary_stake must be in [0, 1]");
}

void CampaignConfig::validate() const {
    if (scenarios.empty()) throw std::invalid_argument("campaign: needs at least one scenario");
    if (baseline_sessions < 64)
        throw std::invalid_argument("campaign: baseline_sessions must be >= 64");
    for (const ScenarioSpec& s : scenarios) s.validate();
}

ScenarioSpec default_scenario(ScenarioKind kind) {
    ScenarioSpec s;
    s.kind = kind;
    s.name = scenario_kind_name(kind);
    s.session.n_rounds = 5000;
    switch (kind) {
        case ScenarioKind::TraditionalPlaybook:
            s.adversary = AdversaryStrategy(InterceptResend{1.0, BasisPolicy::RandomBasis});
            break;
        case ScenarioKind::AiRedTeam: {
            s.session.decoy_enabled = false;
            Adaptive a;
            a.arms.push_back(AdversaryStrategy(InterceptResend{1.0, BasisPolicy::RandomBasis}));
            a.arms.push_back(AdversaryStrategy(InterceptResend{0.25, BasisPolicy::RandomBasis}));
            a.arms.push_back(AdversaryStrategy(InterceptResend{0.05, BasisPolicy::RandomBasis}));
            a.arms.push_back(AdversaryStrategy(FaultInject{FaultKind::DetectorBlind, 0.3}));
            a.epsilon = 0.1;
            s.adversary = AdversaryStrategy(std::move(a));
            break;
        }
        case ScenarioKind::QuantumExploit:
            // sized so an enabled decoy analysis sees the splitting at ~6 sigma
            s.session.n_rounds = 30000;
            s.session.mu_signal = 0.5;
            s.session.mu_decoy = 0.1;
            s.session.intensity_probs = {0.55, 0.30, 0.15};
            s.session.decoy_enabled = false;
            s.channel.transmittance = 0.25;
            s.adversary = AdversaryStrategy(PhotonNumberSplit{0.0});
            s.pns_auto_block = true;
            break;
        case ScenarioKind::CryptoAssessment:
            s.channel.depolarize_prob = 0.03;
            break;
        case ScenarioKind::AdversarialMl:
            s.session.n_rounds = 2000;
            s.session.decoy_enabled = false;
            // interception leaves a timing-variance spread the jitter-free
            // baseline never shows; pca flags that off-manifold displacement,
            // while the forest cannot rank a query beyond the trained range
            // above in-sample extremes
            s.channel.depolarize_prob = 0.01;
            s.detector = DetectorKind::Pca;
            s.adversary = AdversaryStrategy(InterceptResend{1.0, BasisPolicy::RandomBasis});
            break;
        case ScenarioKind::ProtocolFuzz:
            s.session.n_rounds = 4000;
            s.channel.depolarize_prob = 0.03;
            break;
        case ScenarioKind::SideChannel:
            break;
        case ScenarioKind::AnomalyMonitor:
            s.session.n_rounds = 2000;
            s.session.decoy_enabled = false;
            s.channel.depolarize_prob = 0.01;
            s.detector = DetectorKind::Pca;
            s.adversary = AdversaryStrategy(InterceptResend{0.25, BasisPolicy::RandomBasis});
            break;
        case ScenarioKind::RetroDecrypt:
            s.session.n_rounds = 2000;
            break;
    }
    return s;
}

// ---------------------------------------------------------------------------
// config parsing (strict: unknown keys are errors at every level)

namespace {

void expect_keys(const json& o, const char* where, std::initializer_list<const char*> allowed) {
    if (!o.is_object())
        throw std::invalid_argument(strf("config: %s must be an object", where));
    for (auto it = o.begin(); it != o.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok)
            throw std::invalid_argument("config: unknown key '" + it.key() + "' in " + where);
    }
}

BasisPolicy basis_policy_from_name(const std::string& s) {
    if (s == "random") return BasisPolicy::RandomBasis;
    if (s == "rectilinear") return BasisPolicy::FixedRectilinear;
    throw std::invalid_argument("config: unknown basis_policy '" + s + "'");
}

FaultKind fault_from_name(const std::string& s) {
    if (s == "detector_blind") return FaultKind::DetectorBlind;
    if (s == "basis_flip") return FaultKind::BasisFlip;
    throw std::invalid_argument("config: unknown fault '" + s + "'");
}

DetectorKind detector_from_name(const std::string& s) {
    if (s == "forest") return DetectorKind::Forest;
    if (s == "pca") return DetectorKind::Pca;
    throw std::invalid_argument("config: unknown detector '" + s + "'");
}

SigScheme scheme_from_name(const std::string& s) {
    if (s == "classical") return SigScheme::Classical;
    if (s == "post_quantum") return SigScheme::PostQuantum;
    throw std::invalid_argument("config: unknown signature scheme '" + s + "'");
}

ValidatorMix mix_from_name(const std::string& s) {
    if (s == "post_quantum") return ValidatorMix::PostQuantum;
    if (s == "classical") return ValidatorMix::Classical;
    if (s == "mixed") return ValidatorMix::Mixed;
    throw std::invalid_argument("config: unknown validator mix '" + s + "'");
}

AdversaryStrategy adversary_from_json(const json& o, bool allow_adaptive) {
    expect_keys(o, "adversary",
                {"kind", "fraction", "basis_policy", "block_prob", "fault", "rate", "arms",
                 "epsilon", "info_gain_weight", "detection_penalty_weight"});
    const std::string kind = o.value("kind", std::string("none"));
    if (kind == "none") return AdversaryStrategy{};
    if (kind == "intercept_resend") {
        InterceptResend ir;
        ir.fraction = o.value("fraction", 1.0);
        if (o.contains("basis_policy"))
            ir.basis_policy = basis_policy_from_name(o.at("basis_policy").get<std::string>());
        return AdversaryStrategy(ir);
    }
    if (kind == "photon_number_split") {
        PhotonNumberSplit pns;
        pns.block_prob = o.value("block_prob", 0.0);
        return AdversaryStrategy(pns);
    }
    if (kind == "fault_inject") {
        FaultInject f;
        if (o.contains("fault")) f.fault = fault_from_name(o.at("fault").get<std::string>());
        f.rate = o.value("rate", 0.0);
        return AdversaryStrategy(f);
    }
    if (kind == "adaptive") {
        if (!allow_adaptive)
            throw std::invalid_argument("config: adaptive arms must be concrete strategies");
        Adaptive a;
        if (!o.contains("arms") || !o.at("arms").is_array() || o.at("arms").empty())
            throw std::invalid_argument("config: adaptive adversary needs a non-empty arms array");
        for (const json& arm : o.at("arms")) a.arms.push_back(adversary_from_json(arm, false));
        a.epsilon = o.value("epsilon", 0.1);
        a.info_gain_weight = o.value("info_gain_weight", 1.0);
        a.detection_penalty_weight = o.value("detection_penalty_weight", 1.0);
        return AdversaryStrategy(std::move(a));
    }
    throw std::invalid_argument("config: unknown adversary kind '" + kind + "'");
}

void session_from_json(const json& o, SessionConfig& s) {
    expect_keys(o, "session",
                {"n_rounds", "mu_signal", "mu_decoy", "decoy_enabled", "intensity_probs",
                 "basis_prob", "qber_abort_threshold", "sample_fraction", "pa_safety_bits",
                 "reconcile_passes", "decoy_tolerance_sigmas", "strict_digest_verification"});
    if (o.contains("n_rounds")) s.n_rounds = o.at("n_rounds").get<uint64_t>();
    if (o.contains("mu_signal")) s.mu_signal = o.at("mu_signal").get<double>();
    if (o.contains("mu_decoy")) s.mu_decoy = o.at("mu_decoy").get<double>();
    if (o.contains("decoy_enabled")) s.decoy_enabled = o.at("decoy_enabled").get<bool>();
    if (o.contains("intensity_probs")) {
        const json& p = o.at("intensity_probs");
        if (!p.is_array() || p.size() != 3)
            throw std::invalid_argument("config: intensity_probs must be an array of 3 numbers");
        for (size_t i = 0; i < 3; ++i) s.intensity_probs[i] = p.at(i).get<double>();
    }
    if (o.contains("basis_prob")) s.basis_prob = o.at("basis_prob").get<double>();
    if (o.contains("qber_abort_threshold"))
        s.qber_abort_threshold = o.at("qber_abort_threshold").get<double>();
    if (o.contains("sample_fraction")) s.sample_fraction = o.at("sample_fraction").get<double>();
    if (o.contains("pa_safety_bits")) s.pa_safety_bits = o.at("pa_safety_bits").get<uint64_t>();
    if (o.contains("reconcile_passes")) s.reconcile_passes = o.at("reconcile_passes").get<int>();
    if (o.contains("decoy_tolerance_sigmas"))
        s.decoy_tolerance_sigmas = o.at("decoy_tolerance_sigmas").get<double>();
    if (o.contains("strict_digest_verification"))
        s.postproc.strict_digest_verification = o.at("strict_digest_verification").get<bool>();
}

void channel_from_json(const json& o, ChannelParams& c) {
    expect_keys(o, "channel",
                {"transmittance", "depolarize_prob", "dark_count_prob", "detector_efficiency",
                 "timing_jitter_ns"});
    if (o.contains("transmittance")) c.transmittance = o.at("transmittance").get<double>();
    if (o.contains("depolarize_prob")) c.depolarize_prob = o.at("depolarize_prob").get<double>();
    if (o.contains("dark_count_prob")) c.dark_count_prob = o.at("dark_count_prob").get<double>();
    if (o.contains("detector_efficiency"))
        c.detector_efficiency = o.at("detector_efficiency").get<double>();
    if (o.contains("timing_jitter_ns")) c.timing_jitter_ns = o.at("timing_jitter_ns").get<double>();
}

ScenarioSpec scenario_from_json(const json& o) {
    expect_keys(o, "scenario",
                {"kind", "name", "repetitions", "session", "channel", "adversary",
                 "pns_auto_block", "detector", "evade_budget", "fuzz", "sidechannel", "proofs"});
    if (!o.contains("kind")) throw std::invalid_argument("config: scenario is missing 'kind'");
    ScenarioSpec s = default_scenario(scenario_kind_from_name(o.at("kind").get<std::string>()));
    if (o.contains("name")) s.name = o.at("name").get<std::string>();
    if (o.contains("repetitions")) s.repetitions = o.at("repetitions").get<uint32_t>();
    if (o.contains("session")) session_from_json(o.at("session"), s.session);
    if (o.contains("channel")) channel_from_json(o.at("channel"), s.channel);
    if (o.contains("adversary")) s.adversary = adversary_from_json(o.at("adversary"), true);
    if (o.contains("pns_auto_block")) s.pns_auto_block = o.at("pns_auto_block").get<bool>();
    if (o.contains("detector")) s.detector = detector_from_name(o.at("detector").get<std::string>());
    if (o.contains("evade_budget")) s.evade_budget = o.at("evade_budget").get<double>();
    if (o.contains("fuzz")) {
        const json& f = o.at("fuzz");
        expect_keys(f, "fuzz",
                    {"cases", "step_budget", "plant_skip_digest_length_check",
                     "plant_accept_reordered_parity", "plant_pad_truncated_sift"});
        if (f.contains("cases")) s.fuzz.cases = f.at("cases").get<uint64_t>();
        if (f.contains("step_budget")) s.fuzz.step_budget = f.at("step_budget").get<uint64_t>();
        if (f.contains("plant_skip_digest_length_check"))
            s.fuzz.plant_skip_digest_length_check =
                f.at("plant_skip_digest_length_check").get<bool>();
        if (f.contains("plant_accept_reordered_parity"))
            s.fuzz.plant_accept_reordered_parity = f.at("plant_accept_reordered_parity").get<bool>();
        if (f.contains("plant_pad_truncated_sift"))
            s.fuzz.plant_pad_truncated_sift = f.at("plant_pad_truncated_sift").get<bool>();
    }
    if (o.contains("sidechannel")) {
        const json& sc = o.at("sidechannel");
        expect_keys(sc, "sidechannel",
                    {"leak_weight", "noise_sigma", "samples_per_bit", "traces", "key_bits"});
        if (sc.contains("leak_weight")) s.sidechan.leak.leak_weight = sc.at("leak_weight").get<double>();
        if (sc.contains("noise_sigma")) s.sidechan.leak.noise_sigma = sc.at("noise_sigma").get<double>();
        if (sc.contains("samples_per_bit"))
            s.sidechan.leak.samples_per_bit = sc.at("samples_per_bit").get<uint32_t>();
        if (sc.contains("traces")) s.sidechan.traces = sc.at("traces").get<uint32_t>();
        if (sc.contains("key_bits")) s.sidechan.key_bits = sc.at("key_bits").get<uint32_t>();
    }
    if (o.contains("proofs")) {
        const json& p = o.at("proofs");
        expect_keys(p, "proofs",
                    {"count", "tau", "adversary_stake", "adversary_quantum", "mix", "wrapper"});
        if (p.contains("count")) s.proofs.count = p.at("count").get<uint32_t>();
        if (p.contains("tau")) s.proofs.tau = p.at("tau").get<double>();
        if (p.contains("adversary_stake"))
            s.proofs.adversary_stake = p.at("adversary_stake").get<double>();
        if (p.contains("adversary_quantum"))
            s.proofs.adversary_quantum = p.at("adversary_quantum").get<bool>();
        if (p.contains("mix")) s.proofs.mix = mix_from_name(p.at("mix").get<std::string>());
        if (p.contains("wrapper")) s.proofs.wrapper = scheme_from_name(p.at("wrapper").get<std::string>());
    }
    return s;
}

ordered_json adversary_to_json(const AdversaryStrategy& s) {
    ordered_json o;
    if (auto* ir = std::get_if<InterceptResend>(&s.kind)) {
        o["kind"] = "intercept_resend";
        o["fraction"] = ir->fraction;
        o["basis_policy"] = ir->basis_policy == BasisPolicy::RandomBasis ? "random" : "rectilinear";
    } else if (auto* pns = std::get_if<PhotonNumberSplit>(&s.kind)) {
        o["kind"] = "photon_number_split";
        o["block_prob"] = pns->block_prob;
    } else if (auto* f = std::get_if<FaultInject>(&s.kind)) {
        o["kind"] = "fault_inject";
        o["fault"] = f->fault == FaultKind::DetectorBlind ? "detector_blind" : "basis_flip";
        o["rate"] = f->rate;
    } else if (auto* a = std::get_if<Adaptive>(&s.kind)) {
        o["kind"] = "adaptive";
        o["arms"] = ordered_json::array();
        for (const auto& arm : a->arms) o["arms"].push_back(adversary_to_json(arm));
        o["epsilon"] = a->epsilon;
        o["info_gain_weight"] = a->info_gain_weight;
        o["detection_penalty_weight"] = a->detection_penalty_weight;
    } else {
        o["kind"] = "none";
    }
    return o;
}

ordered_json config_to_json(const CampaignConfig& c) {
    ordered_json root;
    root["master_seed"] = c.master_seed;
    root["max_remediation_iters"] = c.max_remediation_iters;
    root["baseline_sessions"] = c.baseline_sessions;
    root["output_path"] = c.output_path;
    root["scenarios"] = ordered_json::array();
    for (const ScenarioSpec& s : c.scenarios) {
        ordered_json o;
        o["kind"] = scenario_kind_name(s.kind);
        o["name"] = s.name;
        o["repetitions"] = s.repetitions;
        o["session"] = {{"n_rounds", s.session.n_rounds},
                        {"mu_signal", s.session.mu_signal},
                        {"mu_decoy", s.session.mu_decoy},
                        {"decoy_enabled", s.session.decoy_enabled},
                        {"intensity_probs", s.session.intensity_probs},
                        {"basis_prob", s.session.basis_prob},
                        {"qber_abort_threshold", s.session.qber_abort_threshold},
                        {"sample_fraction", s.session.sample_fraction},
                        {"pa_safety_bits", s.session.pa_safety_bits},
                        {"reconcile_passes", s.session.reconcile_passes},
                        {"decoy_tolerance_sigmas", s.session.decoy_tolerance_sigmas},
                        {"strict_digest_verification", s.session.postproc.strict_digest_verification}};
        o["channel"] = {{"transmittance", s.channel.transmittance},
                        {"depolarize_prob", s.channel.depolarize_prob},
                        {"dark_count_prob", s.channel.dark_count_prob},
                        {"detector_efficiency", s.channel.detector_efficiency},
                        {"timing_jitter_ns", s.channel.timing_jitter_ns}};
        o["adversary"] = adversary_to_json(s.adversary);
        o["pns_auto_block"] = s.pns_auto_block;
        o["detector"] = s.detector == DetectorKind::Forest ? "forest" : "pca";
        o["evade_budget"] = s.evade_budget;
        o["fuzz"] = {{"cases", s.fuzz.cases},
                     {"step_budget", s.fuzz.step_budget},
                     {"plant_skip_digest_length_check", s.fuzz.plant_skip_digest_length_check},
                     {"plant_accept_reordered_parity", s.fuzz.plant_accept_reordered_parity},
                     {"plant_pad_truncated_sift", s.fuzz.plant_pad_truncated_sift}};
        o["sidechannel"] = {{"leak_weight", s.sidechan.leak.leak_weight},
                            {"noise_sigma", s.sidechan.leak.noise_sigma},
                            {"samples_per_bit", s.sidechan.leak.samples_per_bit},
                            {"traces", s.sidechan.traces},
                            {"key_bits", s.sidechan.key_bits}};
        const char* mix = s.proofs.mix == ValidatorMix::PostQuantum ? "post_quantum"
                          : s.proofs.mix == ValidatorMix::Classical ? "classical"
                                                                    : "mixed";
        o["proofs"] = {{"count", s.proofs.count},
                       {"tau", s.proofs.tau},
                       {"adversary_stake", s.proofs.adversary_stake},
                       {"adversary_quantum", s.proofs.adversary_quantum},
                       {"mix", mix},
                       {"wrapper", s.proofs.wrapper == SigScheme::Classical ? "classical"
                                                                            : "post_quantum"}};
        root["scenarios"].push_back(std::move(o));
    }
    return root;
}

} // namespace

CampaignConfig campaign_config_from_json_text(const std::string& text) {
    json root = json::parse(text);
    expect_keys(root, "campaign",
                {"scenarios", "master_seed", "max_remediation_iters", "baseline_sessions",
                 "output_path"});
    CampaignConfig c;
    if (root.contains("master_seed")) c.master_seed = root.at("master_seed").get<uint64_t>();
    if (root.contains("max_remediation_iters"))
        c.max_remediation_iters = root.at("max_remediation_iters").get<uint32_t>();
    if (root.contains("baseline_sessions"))
        c.baseline_sessions = root.at("baseline_sessions").get<uint32_t>();
    if (root.contains("output_path")) c.output_path = root.at("output_path").get<std::string>();
    if (!root.contains("scenarios") || !root.at("scenarios").is_array())
        throw std::invalid_argument("config: 'scenarios' array is required");
    for (const json& s : root.at("scenarios")) c.scenarios.push_back(scenario_from_json(s));
    c.validate();
    return c;
}

CampaignConfig load_campaign_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return campaign_config_from_json_text(ss.str());
}

// ---------------------------------------------------------------------------
// forensics, retro decryption, remediation

ForensicSummary forensic_trace(const Transcript& tr, const EveRecord& eve, const Telemetry& t,
                               const DecoyAnalysis* decoy) {
    ForensicSummary fs;
    fs.session_id = t.session_id;

    size_t touched_total = 0;
    for (const EveRoundRecord& r : eve.rounds) touched_total += r.touched ? 1 : 0;

    size_t touched_sifted = 0;
    for (uint32_t id : tr.sifted_indices) {
        if (id < eve.rounds.size() && eve.rounds[id].touched) {
            ++touched_sifted;
            if (fs.compromised_round_ids.size() < 256) fs.compromised_round_ids.push_back(id);
        }
    }
    fs.compromised_round_count = touched_sifted;
    fs.eve_information_fraction = eve_known_fraction(tr, eve);

    const size_t n_rounds = tr.rounds.size();
    const double touched_fraction = n_rounds ? double(touched_total) / double(n_rounds) : 0.0;
    const double f_sift =
        tr.sifted_indices.empty() ? 0.0 : double(touched_sifted) / double(tr.sifted_indices.size());
    const bool have_qber = t.qber_estimate.has_value();
    const double qber = t.qber_estimate.value_or(0.0);

    size_t cnt_t = 0, cnt_u = 0, clicks_t = 0, clicks_u = 0;
    for (size_t i = 0; i < n_rounds; ++i) {
        const bool touched = i < eve.rounds.size() && eve.rounds[i].touched;
        const bool clicked = tr.rounds[i].outcome.clicked;
        if (touched) {
            ++cnt_t;
            clicks_t += clicked ? 1 : 0;
        } else {
            ++cnt_u;
            clicks_u += clicked ? 1 : 0;
        }
    }
    double click_ratio = -1.0; // undefined unless both populations are sampled
    if (cnt_t >= 20 && cnt_u >= 20 && clicks_u > 0) {
        const double rt = double(clicks_t) / double(cnt_t);
        const double ru = double(clicks_u) / double(cnt_u);
        click_ratio = rt / ru;
    }

    fs.evidence["touched_fraction"] = touched_fraction;
    if (have_qber) fs.evidence["qber_minus_quarter_touched"] = qber - f_sift / 4.0;
    if (click_ratio >= 0.0) fs.evidence["click_ratio_touched_vs_untouched"] = click_ratio;
    if (decoy) fs.evidence["decoy_deviation_sigmas"] = decoy->deviation_sigmas;

    if (touched_total == 0) {
        fs.attributed_strategy = "none";
    } else if (decoy && decoy->pns_suspected) {
        fs.attributed_strategy = "photon_number_split";
    } else if (f_sift > 0.02 && have_qber && qber >= 0.015 &&
               std::abs(qber - f_sift / 4.0) <= std::max(0.03, 0.3 * f_sift / 4.0)) {
        fs.attributed_strategy = "intercept_resend";
    } else if (click_ratio >= 0.0 && click_ratio < 0.85) {
        fs.attributed_strategy = "detector_blind";
    } else {
        fs.attributed_strategy = "unknown";
    }
    return fs;
}

std::vector<RetroVerdict> retro_decrypt(const std::vector<StoredPayload>& stored,
                                        const AdversaryPower& adversary) {
    std::vector<RetroVerdict> out;
    out.reserve(stored.size());
    for (const StoredPayload& p : stored)
        out.push_back(
            {p.session_id, p.harvest_epoch, adversary.quantum && p.wrapper == SigScheme::Classical});
    return out;
}

Remediation remediate(const std::vector<Finding>& findings, const SessionConfig& session,
                      const LeakModel& leak) {
    Remediation out;
    out.session = session;
    out.leak = leak;
    auto has = [&](FindingKind k) {
        return std::any_of(findings.begin(), findings.end(),
                           [&](const Finding& f) { return f.kind == k; });
    };
    if (has(FindingKind::PnsUndetected) && !session.decoy_enabled) {
        out.action = RemediationAction::EnableDecoys;
        out.session.decoy_enabled = true;
        out.description = "enable decoy intensities so photon-number splitting shifts the gains";
    } else if ((has(FindingKind::UndetectedEavesdropping) || has(FindingKind::MonitoringGap)) &&
               session.qber_abort_threshold > 0.05) {
        out.action = RemediationAction::LowerQberThreshold;
        out.session.qber_abort_threshold = std::max(0.05, session.qber_abort_threshold - 0.02);
        out.description =
            strf("lower the qber abort threshold to %.4f", out.session.qber_abort_threshold);
    } else if (has(FindingKind::FuzzKeyMismatch) &&
               !session.postproc.strict_digest_verification) {
        out.action = RemediationAction::StrictDigestVerification;
        out.session.postproc.strict_digest_verification = true;
        out.description = "re-enable strict digest length verification in post-processing";
    } else if (has(FindingKind::SideChannelKeyRecovery) && leak.leak_weight != 0.0) {
        out.action = RemediationAction::ZeroLeakWeight;
        out.leak.leak_weight = 0.0;
        out.description = "constant-time rework: remove the secret-dependent leakage amplitude";
    } else {
        out.action = RemediationAction::NoChange;
        out.description = "no applicable remediation";
    }
    return out;
}

// ---------------------------------------------------------------------------
// campaign orchestration

namespace {

constexpr uint64_t kBaselineRepBase = 90000; // keeps baseline ids clear of attack reps

uint64_t session_id_of(uint32_t scenario, uint32_t iteration, uint64_t rep) {
    return uint64_t(scenario) * 10000000 + uint64_t(iteration) * 100000 + rep;
}

struct ScenarioState {
    const CampaignConfig& cfg;
    const ScenarioSpec& spec;
    uint32_t index = 0;
    SessionConfig session;  // remediation-adjusted
    LeakModel leak;         // remediation-adjusted
    std::optional<EpsilonGreedyBandit> bandit;
    std::optional<RngStream> bandit_rng;
    std::string detector_digest;
};

struct CampaignSink {
    CampaignReport& report;
    uint64_t event_seq = 0;

    void log(uint32_t scen, uint32_t iter, const char* stage, std::string detail) {
        report.events.push_back({event_seq++, scen, iter, stage, std::move(detail)});
    }
    void telemetry_row(const Telemetry& t) {
        report.telemetry_csv += telemetry_csv_row(t);
        report.telemetry_csv += '\n';
    }
};

struct RepOutcome {
    uint64_t sid = 0;
    SessionResult result;
    FeatureVector features{};
    bool flagged = false;
};

double severity_rank(const std::string& s) {
    if (s == "critical") return 3;
    if (s == "high") return 2;
    if (s == "medium") return 1;
    return 0;
}

void sort_findings(std::vector<Finding>& v) {
    std::stable_sort(v.begin(), v.end(), [](const Finding& a, const Finding& b) {
        return severity_rank(a.severity) > severity_rank(b.severity);
    });
}

// shared session loop for the scenarios that drive the quantum link
std::vector<RepOutcome> run_attack_sessions(ScenarioState& st, CampaignSink& sink, uint32_t iter) {
    std::vector<RepOutcome> reps;
    reps.reserve(st.spec.repetitions);
    const Adaptive* adaptive = std::get_if<Adaptive>(&st.spec.adversary.kind);
    for (uint32_t rep = 0; rep < st.spec.repetitions; ++rep) {
        AdversaryStrategy resolved = st.spec.adversary;
        size_t arm = SIZE_MAX;
        if (adaptive && st.bandit) {
            arm = st.bandit->select(*st.bandit_rng);
            resolved = adaptive->arms[arm];
        }
        if (st.spec.pns_auto_block)
            if (auto* pns = std::get_if<PhotonNumberSplit>(&resolved.kind))
                pns->block_prob =
                    gain_compensating_block_prob(st.session.mu_signal, st.spec.channel);

        RepOutcome out;
        out.sid = session_id_of(st.index, iter, rep);
        const uint64_t seed = derive_seed(st.cfg.master_seed, st.index, rep, iter);
        out.result = run_session(st.session, st.spec.channel, &resolved, seed, out.sid);
        out.features = telemetry_features(out.result.telemetry);
        sink.telemetry_row(out.result.telemetry);

        if (adaptive && st.bandit) {
            const double fraction =
                eve_known_fraction(out.result.transcript, out.result.eve);
            const bool aborted = out.result.transcript.abort_reason != AbortReason::None;
            st.bandit->observe(arm, adversary_reward(fraction, aborted, adaptive->info_gain_weight,
                                                     adaptive->detection_penalty_weight));
        }
        reps.push_back(std::move(out));
    }
    return reps;
}

std::vector<FeatureVector> run_baseline_sessions(ScenarioState& st, CampaignSink& sink,
                                                 uint32_t iter) {
    std::vector<FeatureVector> baseline;
    baseline.reserve(st.cfg.baseline_sessions);
    for (uint32_t i = 0; i < st.cfg.baseline_sessions; ++i) {
        const uint64_t sid = session_id_of(st.index, iter, kBaselineRepBase + i);
        const uint64_t seed = derive_seed(st.cfg.master_seed, st.index, kBaselineRepBase + i, iter);
        SessionResult r = run_session(st.session, st.spec.channel, nullptr, seed, sid);
        sink.telemetry_row(r.telemetry);
        baseline.push_back(telemetry_features(r.telemetry));
    }
    return baseline;
}

void add_forensics(const std::vector<RepOutcome>& reps, IterationReport& ir) {
    for (const RepOutcome& r : reps) {
        const bool touched = std::any_of(r.result.eve.rounds.begin(), r.result.eve.rounds.end(),
                                         [](const EveRoundRecord& e) { return e.touched; });
        if (!touched) continue;
        const DecoyAnalysis* decoy = r.result.decoy ? &*r.result.decoy : nullptr;
        ir.forensics.push_back(
            forensic_trace(r.result.transcript, r.result.eve, r.result.telemetry, decoy));
    }
}

std::string top_attribution(const IterationReport& ir) {
    std::map<std::string, size_t> counts;
    for (const ForensicSummary& f : ir.forensics) ++counts[f.attributed_strategy];
    std::string best = "none";
    size_t n = 0;
    for (const auto& [k, v] : counts)
        if (v > n) {
            best = k;
            n = v;
        }
    return best;
}

void qkd_common_metrics(const std::vector<RepOutcome>& reps, IterationReport& ir) {
    size_t aborted = 0, qber_defined = 0;
    double qber_sum = 0.0, eve_sum = 0.0;
    for (const RepOutcome& r : reps) {
        if (r.result.transcript.abort_reason != AbortReason::None) ++aborted;
        if (r.result.telemetry.qber_estimate) {
            ++qber_defined;
            qber_sum += *r.result.telemetry.qber_estimate;
        }
        eve_sum += eve_known_fraction(r.result.transcript, r.result.eve);
    }
    ir.metrics["sessions"] = double(reps.size());
    ir.metrics["aborted"] = double(aborted);
    if (qber_defined) ir.metrics["mean_qber"] = qber_sum / double(qber_defined);
    ir.metrics["mean_eve_fraction"] = reps.empty() ? 0.0 : eve_sum / double(reps.size());
}

// eavesdropping and splitting findings shared by the link scenarios
void qkd_findings(ScenarioState& st, const std::vector<RepOutcome>& reps, bool gate_on_detector,
                  IterationReport& ir) {
    std::vector<uint64_t> undetected_ids;
    double undetected_fraction_sum = 0.0;
    std::vector<uint64_t> pns_ids;
    for (const RepOutcome& r : reps) {
        if (r.result.transcript.abort_reason != AbortReason::None) continue;
        const double fraction = eve_known_fraction(r.result.transcript, r.result.eve);
        const bool caught_by_detector = gate_on_detector && r.flagged;
        if (fraction > 0.05 && !caught_by_detector) {
            undetected_ids.push_back(r.sid);
            undetected_fraction_sum += fraction;
        }
        uint64_t stolen = 0;
        for (const EveRoundRecord& e : r.result.eve.rounds) stolen += e.photons_stolen;
        if (stolen > 0) pns_ids.push_back(r.sid);
    }
    if (!undetected_ids.empty()) {
        Finding f;
        f.kind = gate_on_detector ? FindingKind::MonitoringGap : FindingKind::UndetectedEavesdropping;
        f.severity = "high";
        f.description = gate_on_detector
                            ? strf("%zu/%u attacked sessions passed the qber gate and the anomaly "
                                   "detector while leaking key material",
                                   undetected_ids.size(), st.spec.repetitions)
                            : strf("%zu/%u sessions completed with the adversary holding over 5%% "
                                   "of the sifted key",
                                   undetected_ids.size(), st.spec.repetitions);
        f.session_ids = undetected_ids;
        f.metrics["sessions"] = double(undetected_ids.size());
        f.metrics["mean_eve_fraction"] = undetected_fraction_sum / double(undetected_ids.size());
        ir.findings.push_back(std::move(f));
    }
    if (!pns_ids.empty()) {
        Finding f;
        f.kind = FindingKind::PnsUndetected;
        f.severity = "critical";
        f.description = strf("photon-number splitting stole pulse copies in %zu/%u sessions "
                             "without tripping any abort gate",
                             pns_ids.size(), st.spec.repetitions);
        f.session_ids = pns_ids;
        f.metrics["sessions"] = double(pns_ids.size());
        ir.findings.push_back(std::move(f));
    }
}

void run_link_iteration(ScenarioState& st, CampaignSink& sink, uint32_t iter,
                        IterationReport& ir) {
    const bool wants_detector = st.spec.kind == ScenarioKind::AnomalyMonitor ||
                                st.spec.kind == ScenarioKind::AdversarialMl;
    sink.log(st.index, iter, "environment_setup",
             strf("n_rounds=%llu decoy=%s qber_threshold=%.4f transmittance=%.4g",
                  (unsigned long long)st.session.n_rounds,
                  st.session.decoy_enabled ? "on" : "off", st.session.qber_abort_threshold,
                  st.spec.channel.transmittance));

    DetectorModel model;
    double alert_threshold = 0.0;
    if (wants_detector) {
        const std::vector<FeatureVector> baseline = run_baseline_sessions(st, sink, iter);
        RngStream fit_rng(derive_seed(st.cfg.master_seed, st.index, 910000, iter));
        model = fit(baseline, st.spec.detector, FitParams{}, fit_rng);
        alert_threshold = std::max(calibrate_alert_threshold(model, baseline), 1e-9);
        st.detector_digest = model_digest(model);
        sink.log(st.index, iter, "model_training",
                 strf("fitted %s detector on %u baseline sessions, alert_threshold=%.6f",
                      st.spec.detector == DetectorKind::Forest ? "forest" : "pca",
                      st.cfg.baseline_sessions, alert_threshold));
    } else {
        sink.log(st.index, iter, "model_training", "no detector for this scenario");
    }

    std::vector<RepOutcome> reps = run_attack_sessions(st, sink, iter);
    size_t aborted = 0;
    for (const RepOutcome& r : reps)
        if (r.result.transcript.abort_reason != AbortReason::None) ++aborted;
    sink.log(st.index, iter, "red_team",
             strf("%zu sessions run, %zu aborted, adversary=%s", reps.size(), aborted,
                  adversary_label(st.spec.adversary).c_str()));

    size_t flagged = 0;
    size_t evaded = 0;
    double score_before_sum = 0.0, score_after_sum = 0.0;
    if (wants_detector) {
        for (RepOutcome& r : reps) {
            const Detection d = detect(model, r.features, alert_threshold);
            r.flagged = d.anomalous;
            flagged += d.anomalous ? 1 : 0;
            score_before_sum += d.score;
            if (st.spec.kind == ScenarioKind::AdversarialMl) {
                const EvadeResult ev = evade(model, r.features, st.spec.evade_budget);
                score_after_sum += ev.score;
                if (ev.score < alert_threshold) ++evaded;
            }
        }
        sink.log(st.index, iter, "anomaly_detection",
                 strf("%zu/%zu attack sessions flagged", flagged, reps.size()));
    } else {
        sink.log(st.index, iter, "anomaly_detection", "no detector configured");
    }

    add_forensics(reps, ir);
    sink.log(st.index, iter, "forensics",
             strf("%zu summaries, top attribution=%s", ir.forensics.size(),
                  top_attribution(ir).c_str()));

    qkd_common_metrics(reps, ir);
    if (wants_detector) {
        ir.metrics["flagged"] = double(flagged);
        ir.metrics["alert_threshold"] = alert_threshold;
        if (!reps.empty()) ir.metrics["mean_attack_score"] = score_before_sum / double(reps.size());
    }

    if (st.spec.kind == ScenarioKind::AdversarialMl) {
        // evasion is audited against the detector alone: session-level gates
        // stay with the monitor scenario
        const double rate = reps.empty() ? 0.0 : double(evaded) / double(reps.size());
        ir.metrics["evasion_rate"] = rate;
        if (!reps.empty()) ir.metrics["mean_evaded_score"] = score_after_sum / double(reps.size());
        if (rate >= 0.5) {
            Finding f;
            f.kind = FindingKind::DetectorEvasion;
            f.severity = "high";
            f.description =
                strf("feature perturbations within budget %.3g slipped %zu/%zu attack sessions "
                     "under the alert threshold",
                     st.spec.evade_budget, evaded, reps.size());
            for (const RepOutcome& r : reps) f.session_ids.push_back(r.sid);
            f.metrics["evasion_rate"] = rate;
            f.metrics["alert_threshold"] = alert_threshold;
            ir.findings.push_back(std::move(f));
        }
    } else {
        qkd_findings(st, reps, st.spec.kind == ScenarioKind::AnomalyMonitor, ir);
    }
}

void run_crypto_iteration(ScenarioState& st, CampaignSink& sink, uint32_t iter,
                          IterationReport& ir) {
    sink.log(st.index, iter, "environment_setup",
             strf("n_rounds=%llu depolarize=%.4g safety_bits=%llu",
                  (unsigned long long)st.session.n_rounds, st.spec.channel.depolarize_prob,
                  (unsigned long long)st.session.pa_safety_bits));
    sink.log(st.index, iter, "model_training", "no detector for this scenario");

    std::vector<RepOutcome> reps = run_attack_sessions(st, sink, iter);
    Bits pooled;
    std::vector<uint64_t> over_budget_ids;
    size_t succeeded = 0;
    double key_bits_sum = 0.0;
    for (const RepOutcome& r : reps) {
        const Transcript& tr = r.result.transcript;
        if (tr.abort_reason != AbortReason::None || !tr.alice_final_key) continue;
        ++succeeded;
        key_bits_sum += double(tr.alice_final_key->size());
        pooled.insert(pooled.end(), tr.alice_final_key->begin(), tr.alice_final_key->end());
        const size_t kept = tr.sifted_indices.size() - tr.revealed_indices.size();
        const double qber = r.result.telemetry.qber_estimate.value_or(0.0);
        const int64_t budget = pa_output_length(kept, qber, r.result.leaked_bits,
                                                st.session.pa_safety_bits);
        if (st.session.pa_safety_bits == 0 ||
            int64_t(tr.alice_final_key->size()) > std::max<int64_t>(budget, 0))
            over_budget_ids.push_back(r.sid);
    }
    sink.log(st.index, iter, "red_team",
             strf("%zu sessions, %zu produced keys, %zu pooled bits", reps.size(), succeeded,
                  pooled.size()));
    sink.log(st.index, iter, "anomaly_detection", "no detector configured");

    RandomnessVerdict rv;
    bool rv_defined = false;
    if (pooled.size() >= 100) {
        rv = test_key_randomness(pooled);
        rv_defined = true;
        if (!rv.pass) {
            Finding f;
            f.kind = FindingKind::WeakRandomness;
            f.severity = "critical";
            f.description = strf("pooled final keys fail randomness checks (monobit z=%.2f, "
                                 "runs z=%.2f)",
                                 rv.monobit_z, rv.runs_z);
            f.metrics["monobit_z"] = rv.monobit_z;
            f.metrics["runs_z"] = rv.runs_z;
            f.metrics["pooled_bits"] = double(pooled.size());
            ir.findings.push_back(std::move(f));
        }
    }
    if (!over_budget_ids.empty()) {
        Finding f;
        f.kind = FindingKind::LeakageAccounting;
        f.severity = "high";
        f.description = strf("%zu sessions released key material beyond the disclosed-information "
                             "budget or ran with no safety margin",
                             over_budget_ids.size());
        f.session_ids = over_budget_ids;
        f.metrics["sessions"] = double(over_budget_ids.size());
        ir.findings.push_back(std::move(f));
    }

    add_forensics(reps, ir);
    sink.log(st.index, iter, "forensics", strf("%zu summaries", ir.forensics.size()));

    qkd_common_metrics(reps, ir);
    ir.metrics["succeeded"] = double(succeeded);
    ir.metrics["pooled_bits"] = double(pooled.size());
    if (succeeded) ir.metrics["mean_key_bits"] = key_bits_sum / double(succeeded);
    if (rv_defined) {
        ir.metrics["monobit_z"] = rv.monobit_z;
        ir.metrics["runs_z"] = rv.runs_z;
    }
}

void run_fuzz_iteration(ScenarioState& st, CampaignSink& sink, uint32_t iter,
                        IterationReport& ir) {
    PostProcessingOptions opts;
    opts.bug_skip_digest_length_check = st.spec.fuzz.plant_skip_digest_length_check;
    opts.bug_accept_reordered_parity = st.spec.fuzz.plant_accept_reordered_parity;
    opts.bug_pad_truncated_sift = st.spec.fuzz.plant_pad_truncated_sift;
    opts.strict_digest_verification = st.session.postproc.strict_digest_verification;

    std::vector<FuzzTarget> targets;
    std::vector<std::string> target_names;

    // stressed substrate: under-corrected dialogue where digest laxity
    // releases wrong keys instead of merely desynchronizing
    targets.push_back(
        make_stressed_fuzz_target(derive_seed(st.cfg.master_seed, st.index, 921000, iter), opts));
    target_names.push_back("stressed");

    const uint64_t conv_sid = session_id_of(st.index, iter, 99000);
    SessionResult conv = run_session(st.session, st.spec.channel, nullptr,
                                     derive_seed(st.cfg.master_seed, st.index, 920000, iter),
                                     conv_sid);
    sink.telemetry_row(conv.telemetry);
    if (conv.transcript.abort_reason == AbortReason::None &&
        !conv.transcript.parity_messages.empty()) {
        PostProcessingFixture fx = make_postprocessing_fixture(st.session, conv.transcript);
        FuzzTarget t;
        t.ctx = std::move(fx.ctx);
        t.alice_kept_key = std::move(fx.alice_kept_key);
        t.base_dialogue = std::move(fx.dialogue);
        t.options = opts;
        targets.push_back(std::move(t));
        target_names.push_back("converged");
    }
    sink.log(st.index, iter, "environment_setup",
             strf("%zu fuzz substrates, bugs[digest=%d reorder=%d sift=%d strict=%d]",
                  targets.size(), int(opts.bug_skip_digest_length_check),
                  int(opts.bug_accept_reordered_parity), int(opts.bug_pad_truncated_sift),
                  int(opts.strict_digest_verification)));
    sink.log(st.index, iter, "model_training", "no detector for this scenario");

    struct Hit {
        size_t target = 0;
        FuzzCase fc;
        std::vector<uint64_t> case_ids;
    };
    std::map<FuzzVerdict, Hit> hits;
    uint64_t cases_run = 0, violations = 0;
    for (size_t ti = 0; ti < targets.size(); ++ti) {
        const uint64_t fuzz_seed = derive_seed(st.cfg.master_seed, st.index, 922000 + ti, iter);
        const std::vector<FuzzOutcome> outcomes =
            fuzz_post_processing(targets[ti], st.spec.fuzz.cases, fuzz_seed,
                                 st.spec.fuzz.step_budget);
        cases_run += outcomes.size();
        for (const FuzzOutcome& o : outcomes) {
            ir.metrics[strf("cases_%s", fuzz_verdict_name(o.verdict))] += 1.0;
            if (!is_invariant_violation(o.verdict)) continue;
            ++violations;
            Hit& h = hits[o.verdict];
            if (h.case_ids.empty()) {
                h.target = ti;
                h.fc = o.fc;
            }
            if (h.case_ids.size() < 32) h.case_ids.push_back(o.fc.case_id);
        }
    }
    sink.log(st.index, iter, "red_team",
             strf("%llu cases fuzzed, %llu invariant violations", (unsigned long long)cases_run,
                  (unsigned long long)violations));
    sink.log(st.index, iter, "anomaly_detection", "no detector configured");
    sink.log(st.index, iter, "forensics",
             strf("%zu distinct violation classes", hits.size()));

    for (auto& [verdict, hit] : hits) {
        const FuzzCase minimized =
            minimize(targets[hit.target], hit.fc, st.spec.fuzz.step_budget);
        Artifact art;
        art.name = strf("scenario%u_iter%u_%s.qrtf", st.index, iter, fuzz_verdict_name(verdict));
        art.bytes = encode_replay(targets[hit.target], minimized, st.spec.fuzz.step_budget);
        sink.report.artifacts.push_back(std::move(art));

        Finding f;
        switch (verdict) {
            case FuzzVerdict::KeyMismatchUndetected:
                f.kind = FindingKind::FuzzKeyMismatch;
                f.severity = "critical";
                break;
            case FuzzVerdict::NonTermination:
                f.kind = FindingKind::FuzzNonTermination;
                f.severity = "high";
                break;
            case FuzzVerdict::Panic:
                f.kind = FindingKind::FuzzPanic;
                f.severity = "critical";
                break;
            default:
                f.kind = FindingKind::FuzzStateDesync;
                f.severity = "high";
                break;
        }
        f.description = strf("dialogue fuzzing on the %s substrate produced %s; minimized "
                             "reproducer attached",
                             target_names[hit.target].c_str(), fuzz_verdict_name(verdict));
        f.case_ids = hit.case_ids;
        f.metrics["cases"] = double(hit.case_ids.size());
        f.replay_artifact = strf("scenario%u_iter%u_%s.qrtf", st.index, iter,
                                 fuzz_verdict_name(verdict));
        ir.findings.push_back(std::move(f));
    }
    ir.metrics["cases"] = double(cases_run);
    ir.metrics["violations"] = double(violations);
}

void run_sidechannel_iteration(ScenarioState& st, CampaignSink& sink, uint32_t iter,
                               IterationReport& ir) {
    const SideChannelParams& p = st.spec.sidechan;
    RngStream key_rng(derive_seed(st.cfg.master_seed, st.index, 930000, iter));
    Bits secret(p.key_bits);
    for (auto& b : secret) b = key_rng.bit();
    sink.log(st.index, iter, "environment_setup",
             strf("key_bits=%u traces=%u leak_weight=%.4g noise_sigma=%.4g", p.key_bits, p.traces,
                  st.leak.leak_weight, st.leak.noise_sigma));
    sink.log(st.index, iter, "model_training", "no detector for this scenario");

    std::vector<Trace> traces;
    traces.reserve(p.traces);
    for (uint32_t t = 0; t < p.traces; ++t)
        traces.push_back(emit_trace(secret, st.leak,
                                    derive_seed(st.cfg.master_seed, st.index, 940000 + t, iter),
                                    t));
    const DpaResult dpa = dpa_recover(traces, st.leak.samples_per_bit);
    const double accuracy = recovery_accuracy(secret, dpa.recovered);
    sink.log(st.index, iter, "red_team",
             strf("differential analysis over %u traces, accuracy=%.4f", p.traces, accuracy));
    sink.log(st.index, iter, "anomaly_detection", "no detector configured");
    sink.log(st.index, iter, "forensics",
             strf("cluster separation=%.4f threshold=%.4f", dpa.separation, dpa.threshold));

    if (accuracy >= 0.8) {
        Finding f;
        f.kind = FindingKind::SideChannelKeyRecovery;
        f.severity = "critical";
        f.description = strf("differential trace analysis recovered %.1f%% of the secret key "
                             "from %u traces",
                             accuracy * 100.0, p.traces);
        f.metrics["accuracy"] = accuracy;
        f.metrics["separation"] = dpa.separation;
        f.metrics["snr"] = st.leak.snr();
        ir.findings.push_back(std::move(f));
    }
    ir.metrics["accuracy"] = accuracy;
    ir.metrics["traces"] = double(p.traces);
    ir.metrics["separation"] = dpa.separation;
}

ValidatorSet build_validator_set(const ScenarioState& st) {
    ValidatorSet set;
    const uint32_t n = st.spec.proofs.count;
    for (uint32_t id = 0; id < n; ++id) {
        Validator v;
        v.id = id;
        v.stake = 1.0 / double(n);
        switch (st.spec.proofs.mix) {
            case ValidatorMix::PostQuantum: v.scheme = SigScheme::PostQuantum; break;
            case ValidatorMix::Classical: v.scheme = SigScheme::Classical; break;
            case ValidatorMix::Mixed:
                v.scheme = (id % 2 == 0) ? SigScheme::PostQuantum : SigScheme::Classical;
                break;
        }
        v.secret = derive_seed(st.cfg.master_seed, st.index, 960000 + id, 0);
        set.members.push_back(v);
    }
    return set;
}

void run_retro_iteration(ScenarioState& st, CampaignSink& sink, uint32_t iter,
                         IterationReport& ir) {
    std::vector<RepOutcome> reps = run_attack_sessions(st, sink, iter);
    std::vector<StoredPayload> stored;
    for (uint32_t rep = 0; rep < reps.size(); ++rep) {
        const Transcript& tr = reps[rep].result.transcript;
        if (tr.abort_reason != AbortReason::None || !tr.alice_final_key) continue;
        StoredPayload p;
        p.session_id = reps[rep].sid;
        p.harvest_epoch = 1000 + rep;
        p.wrapper = st.spec.proofs.wrapper;
        p.key_digest =
            hex16(fnv1a64(tr.alice_final_key->data(), tr.alice_final_key->size()));
        stored.push_back(std::move(p));
    }
    ValidatorSet set = build_validator_set(st);
    sink.log(st.index, iter, "environment_setup",
             strf("%zu payloads stored (%s wrapped), %u validators tau=%.2f", stored.size(),
                  st.spec.proofs.wrapper == SigScheme::Classical ? "classical" : "post_quantum",
                  st.spec.proofs.count, st.spec.proofs.tau));
    sink.log(st.index, iter, "model_training", "no detector for this scenario");

    AdversaryPower adv;
    adv.quantum = st.spec.proofs.adversary_quantum;
    const uint32_t controlled =
        uint32_t(st.spec.proofs.adversary_stake * double(st.spec.proofs.count) + 1e-9);
    for (uint32_t id = 0; id < controlled && id < st.spec.proofs.count; ++id)
        adv.controlled.push_back(id);
    const double controlled_stake = set.stake_of(adv.controlled);

    const std::vector<RetroVerdict> verdicts = retro_decrypt(stored, adv);
    std::vector<uint64_t> compromised_ids;
    for (const RetroVerdict& v : verdicts)
        if (v.compromised) compromised_ids.push_back(v.session_id);

    const uint64_t epoch = 5000 + iter;
    const Digest32 fake = make_digest(derive_seed(st.cfg.master_seed, st.index, 970000, iter));
    const ForgeResult forged = forge_attempt(adv, set, epoch, fake, st.spec.proofs.tau);
    sink.log(st.index, iter, "red_team",
             strf("%zu/%zu payloads retro-decrypted, forge %s with stake %.3f",
                  compromised_ids.size(), stored.size(), forged.success ? "succeeded" : "failed",
                  forged.achieved_stake));
    sink.log(st.index, iter, "anomaly_detection", "no detector configured");
    sink.log(st.index, iter, "forensics",
             strf("controlled validators=%zu stake=%.3f quantum=%d", adv.controlled.size(),
                  controlled_stake, int(adv.quantum)));

    if (!compromised_ids.empty()) {
        Finding f;
        f.kind = FindingKind::HarvestNowDecryptLater;
        f.severity = "critical";
        f.description = strf("%zu stored payloads wrapped with classical signatures are "
                             "decryptable once the adversary fields a quantum attack",
                             compromised_ids.size());
        f.session_ids = compromised_ids;
        f.metrics["compromised"] = double(compromised_ids.size());
        f.metrics["stored"] = double(stored.size());
        ir.findings.push_back(std::move(f));
    }
    if (forged.success) {
        Finding f;
        f.kind = FindingKind::ForgeableAttestation;
        f.severity = "critical";
        f.description = strf("adversary minted a verifying state proof with %.3f directly "
                             "controlled stake (tau=%.2f)",
                             controlled_stake, st.spec.proofs.tau);
        f.metrics["achieved_stake"] = forged.achieved_stake;
        f.metrics["controlled_stake"] = controlled_stake;
        f.metrics["tau"] = st.spec.proofs.tau;
        ir.findings.push_back(std::move(f));
    }
    ir.metrics["stored"] = double(stored.size());
    ir.metrics["compromised"] = double(compromised_ids.size());
    ir.metrics["forge_success"] = forged.success ? 1.0 : 0.0;
    ir.metrics["controlled_stake"] = controlled_stake;
    ir.metrics["achieved_stake"] = forged.achieved_stake;
    ir.metrics["tau"] = st.spec.proofs.tau;
}

void run_iteration(ScenarioState& st, CampaignSink& sink, uint32_t iter, IterationReport& ir) {
    switch (st.spec.kind) {
        case ScenarioKind::TraditionalPlaybook:
        case ScenarioKind::AiRedTeam:
        case ScenarioKind::QuantumExploit:
        case ScenarioKind::AnomalyMonitor:
        case ScenarioKind::AdversarialMl:
            run_link_iteration(st, sink, iter, ir);
            break;
        case ScenarioKind::CryptoAssessment:
            run_crypto_iteration(st, sink, iter, ir);
            break;
        case ScenarioKind::ProtocolFuzz:
            run_fuzz_iteration(st, sink, iter, ir);
            break;
        case ScenarioKind::SideChannel:
            run_sidechannel_iteration(st, sink, iter, ir);
            break;
        case ScenarioKind::RetroDecrypt:
            run_retro_iteration(st, sink, iter, ir);
            break;
    }
    sort_findings(ir.findings);
}

} // namespace

CampaignReport run_campaign(const CampaignConfig& config) {
    config.validate();
    CampaignReport report;
    report.version = "qrt-1";
    report.master_seed = config.master_seed;
    const std::string canon = config_to_json(config).dump();
    report.config_digest = hex16(fnv1a64(canon.data(), canon.size()));
    report.wall_clock_seconds = 0.0; // pinned: reports must be byte-stable
    report.telemetry_csv = telemetry_csv_header() + "\n";

    CampaignSink sink{report};
    for (uint32_t idx = 0; idx < config.scenarios.size(); ++idx) {
        const ScenarioSpec& spec = config.scenarios[idx];
        ScenarioReport sr;
        sr.index = idx;
        sr.kind = spec.kind;
        sr.name = spec.name.empty() ? scenario_kind_name(spec.kind) : spec.name;
        sr.repetitions = spec.repetitions;

        ScenarioState st{config, spec, idx, spec.session, spec.sidechan.leak,
                         std::nullopt,  std::nullopt, {}};
        if (spec.adversary.is_adaptive()) {
            const Adaptive& a = std::get<Adaptive>(spec.adversary.kind);
            st.bandit.emplace(a.arms.size(), a.epsilon);
            st.bandit_rng.emplace(derive_seed(config.master_seed, idx, 950000, 0));
        }

        for (uint32_t iter = 0;; ++iter) {
            sink.log(idx, iter, "threat_model",
                     strf("kind=%s adversary=%s repetitions=%u", scenario_kind_name(spec.kind),
                          adversary_label(spec.adversary).c_str(), spec.repetitions));
            IterationReport ir;
            ir.iteration = iter;
            run_iteration(st, sink, iter, ir);

            if (ir.findings.empty()) {
                sink.log(idx, iter, "remediation", "no findings, nothing to remediate");
                sr.iterations.push_back(std::move(ir));
                sr.verdict =
                    iter == 0 ? ScenarioVerdict::Resilient : ScenarioVerdict::MitigatedAfterN;
                break;
            }
            if (iter >= config.max_remediation_iters) {
                sink.log(idx, iter, "remediation", "remediation budget exhausted");
                sr.iterations.push_back(std::move(ir));
                sr.verdict = ScenarioVerdict::VulnerableUnmitigated;
                break;
            }
            Remediation rem = remediate(ir.findings, st.session, st.leak);
            sink.log(idx, iter, "remediation",
                     strf("%s: %s", remediation_action_name(rem.action), rem.description.c_str()));
            const bool stop = rem.action == RemediationAction::NoChange;
            st.session = rem.session;
            st.leak = rem.leak;
            ir.remediation = std::move(rem);
            sr.iterations.push_back(std::move(ir));
            if (stop) {
                sr.verdict = ScenarioVerdict::VulnerableUnmitigated;
                break;
            }
        }
        sr.iterations_run = uint32_t(sr.iterations.size());
        sr.detector_digest = st.detector_digest;
        report.scenarios.push_back(std::move(sr));
    }

    report.exit_code = 0;
    for (const ScenarioReport& sr : report.scenarios)
        if (sr.verdict == ScenarioVerdict::VulnerableUnmitigated) report.exit_code = 2;
    return report;
}

// ---------------------------------------------------------------------------
// rendering

namespace {

ordered_json finding_to_json(const Finding& f) {
    ordered_json o;
    o["kind"] = finding_kind_name(f.kind);
    o["severity"] = f.severity;
    o["description"] = f.description;
    o["session_ids"] = f.session_ids;
    o["case_ids"] = f.case_ids;
    o["metrics"] = f.metrics;
    o["replay_artifact"] = f.replay_artifact;
    return o;
}

ordered_json forensic_to_json(const ForensicSummary& fs) {
    ordered_json o;
    o["session_id"] = fs.session_id;
    o["compromised_round_count"] = fs.compromised_round_count;
    o["compromised_round_ids"] = fs.compromised_round_ids;
    o["eve_information_fraction"] = fs.eve_information_fraction;
    o["attributed_strategy"] = fs.attributed_strategy;
    o["evidence"] = fs.evidence;
    return o;
}

} // namespace

std::string render_report(const CampaignReport& report, ReportFormat format) {
    if (format == ReportFormat::Json) {
        ordered_json j;
        j["version"] = report.version;
        j["master_seed"] = report.master_seed;
        j["config_digest"] = report.config_digest;
        j["wall_clock_seconds"] = report.wall_clock_seconds;
        j["exit_code"] = report.exit_code;
        j["scenarios"] = ordered_json::array();
        for (const ScenarioReport& sr : report.scenarios) {
            ordered_json s;
            s["index"] = sr.index;
            s["kind"] = scenario_kind_name(sr.kind);
            s["name"] = sr.name;
            s["repetitions"] = sr.repetitions;
            s["verdict"] = scenario_verdict_name(sr.verdict);
            s["iterations_run"] = sr.iterations_run;
            s["detector_digest"] = sr.detector_digest;
            s["iterations"] = ordered_json::array();
            for (const IterationReport& ir : sr.iterations) {
                ordered_json it;
                it["iteration"] = ir.iteration;
                it["metrics"] = ir.metrics;
                it["findings"] = ordered_json::array();
                for (const Finding& f : ir.findings) it["findings"].push_back(finding_to_json(f));
                it["forensics"] = ordered_json::array();
                for (const ForensicSummary& fs : ir.forensics)
                    it["forensics"].push_back(forensic_to_json(fs));
                if (ir.remediation) {
                    it["remediation"] = {
                        {"action", remediation_action_name(ir.remediation->action)},
                        {"description", ir.remediation->description}};
                }
                s["iterations"].push_back(std::move(it));
            }
            j["scenarios"].push_back(std::move(s));
        }
        j["events"] = ordered_json::array();
        for (const StageEvent& e : report.events)
            j["events"].push_back({{"seq", e.seq},
                                   {"scenario", e.scenario_index},
                                   {"iteration", e.iteration},
                                   {"stage", e.stage},
                                   {"detail", e.detail}});
        size_t telemetry_rows = 0;
        for (char c : report.telemetry_csv) telemetry_rows += c == '\n' ? 1 : 0;
        if (telemetry_rows) --telemetry_rows; // header line
        j["telemetry_rows"] = telemetry_rows;
        j["telemetry_bytes"] = report.telemetry_csv.size();
        j["artifacts"] = ordered_json::array();
        for (const Artifact& a : report.artifacts)
            j["artifacts"].push_back({{"name", a.name}, {"bytes", a.bytes.size()}});
        return j.dump(2) + "\n";
    }

    std::string out;
    out += strf("campaign report %s  master_seed=%llu  config=%s\n", report.version.c_str(),
                (unsigned long long)report.master_seed, report.config_digest.c_str());
    for (const ScenarioReport& sr : report.scenarios) {
        out += strf("scenario %u  %s (%s)  verdict=%s  iterations=%u\n", sr.index,
                    sr.name.c_str(), scenario_kind_name(sr.kind),
                    scenario_verdict_name(sr.verdict), sr.iterations_run);
        for (const IterationReport& ir : sr.iterations) {
            out += strf("  iteration %u: %zu finding(s)\n", ir.iteration, ir.findings.size());
            for (const Finding& f : ir.findings)
                out += strf("    [%s] %s: %s\n", f.severity.c_str(), finding_kind_name(f.kind),
                            f.description.c_str());
            if (ir.remediation)
                out += strf("    remediation: %s (%s)\n",
                            remediation_action_name(ir.remediation->action),
                            ir.remediation->description.c_str());
        }
    }
    out += strf("artifacts: %zu  telemetry bytes: %zu\n", report.artifacts.size(),
                report.telemetry_csv.size());
    out += strf("exit code: %d\n", report.exit_code);
    return out;
}

} // namespace qrt
