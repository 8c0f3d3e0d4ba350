#pragma once

// Campaign orchestration: runs attack scenarios through a seven-stage
// pipeline (threat modeling, environment setup, model training, red teaming,
// anomaly detection, forensics, remediation), collects typed findings, and
// renders deterministic reports.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qrt/adversary.hpp"
#include "qrt/anomaly.hpp"
#include "qrt/bb84.hpp"
#include "qrt/fuzzer.hpp"
#include "qrt/sidechannel.hpp"
#include "qrt/state_anchor.hpp"

namespace qrt {

enum class ScenarioKind : uint8_t {
    TraditionalPlaybook = 0,
    AiRedTeam,
    QuantumExploit,
    CryptoAssessment,
    AdversarialMl,
    ProtocolFuzz,
    SideChannel,
    AnomalyMonitor,
    RetroDecrypt,
};

const char* scenario_kind_name(ScenarioKind k);
ScenarioKind scenario_kind_from_name(const std::string& name);

struct FuzzScenarioParams {
    uint64_t cases = 2000;
    uint64_t step_budget = 1000000;
    bool plant_skip_digest_length_check = false;
    bool plant_accept_reordered_parity = false;
    bool plant_pad_truncated_sift = false;
};

struct SideChannelParams {
    LeakModel leak;
    uint32_t traces = 200;
    uint32_t key_bits = 256;
};

enum class ValidatorMix : uint8_t { PostQuantum = 0, Classical, Mixed };

struct StateProofParams {
    uint32_t count = 6;
    double tau = 0.75;
    double adversary_stake = 0.30;
    bool adversary_quantum = true;
    ValidatorMix mix = ValidatorMix::PostQuantum;
    SigScheme wrapper = SigScheme::Classical; // payload wrapping scheme
};

struct ScenarioSpec {
    ScenarioKind kind = ScenarioKind::TraditionalPlaybook;
    std::string name; // defaults to the kind name
    uint32_t repetitions = 20;
    SessionConfig session;
    ChannelParams channel;
    AdversaryStrategy adversary;
    bool pns_auto_block = false; // resolve block_prob to hold total gain flat
    DetectorKind detector = DetectorKind::Forest;
    double evade_budget = 0.3; // per-feature perturbation cap for evasion probes
    FuzzScenarioParams fuzz;
    SideChannelParams sidechan;
    StateProofParams proofs;

    void validate() const;
};

// Sensible spec for the kind: channel, session sizing, and the adversary
// the scenario is about (e.g. gain-compensated PNS for QuantumExploit).
ScenarioSpec default_scenario(ScenarioKind kind);

struct CampaignConfig {
    std::vector<ScenarioSpec> scenarios;
    uint64_t master_seed = 1;
    uint32_t max_remediation_iters = 3;
    uint32_t baseline_sessions = 128;
    std::string output_path; // optional; CLI may override

    void validate() const;
};

// Strict parse: unknown keys anywhere are errors.
CampaignConfig campaign_config_from_json_text(const std::string& text);
CampaignConfig load_campaign_config(const std::string& path);

enum class FindingKind : uint8_t {
    UndetectedEavesdropping = 0,
    PnsUndetected,
    FuzzKeyMismatch,
    FuzzStateDesync,
    FuzzNonTermination,
    FuzzPanic,
    SideChannelKeyRecovery,
    DetectorEvasion,
    MonitoringGap,
    WeakRandomness,
    LeakageAccounting,
    HarvestNowDecryptLater,
    ForgeableAttestation,
};

const char* finding_kind_name(FindingKind k);

struct Finding {
    FindingKind kind = FindingKind::UndetectedEavesdropping;
    std::string severity = "medium";
    std::string description;
    std::vector<uint64_t> session_ids;
    std::vector<uint64_t> case_ids;
    std::map<std::string, double> metrics;
    std::string replay_artifact; // artifact name for fuzz findings
};

struct ForensicSummary {
    uint64_t session_id = 0;
    std::vector<uint32_t> compromised_round_ids; // touched AND sifted, capped
    uint64_t compromised_round_count = 0;
    double eve_information_fraction = 0.0; // exact, from the Eve record
    std::string attributed_strategy;       // signature match, not ground truth
    std::map<std::string, double> evidence;
};

ForensicSummary forensic_trace(const Transcript& transcript, const EveRecord& eve,
                               const Telemetry& telemetry,
                               const DecoyAnalysis* decoy = nullptr);

struct StoredPayload {
    uint64_t session_id = 0;
    uint64_t harvest_epoch = 0;
    SigScheme wrapper = SigScheme::Classical;
    std::string key_digest;
};

struct RetroVerdict {
    uint64_t session_id = 0;
    uint64_t harvest_epoch = 0;
    bool compromised = false;
};

// Compromised iff the wrapper is Classical and the adversary is quantum.
std::vector<RetroVerdict> retro_decrypt(const std::vector<StoredPayload>& stored,
                                        const AdversaryPower& adversary);

enum class RemediationAction : uint8_t {
    NoChange = 0,
    EnableDecoys,
    LowerQberThreshold,
    StrictDigestVerification,
    ZeroLeakWeight,
};

const char* remediation_action_name(RemediationAction a);

struct Remediation {
    RemediationAction action = RemediationAction::NoChange;
    SessionConfig session;
    LeakModel leak;
    std::string description;
};

// Fixed priority, one rule per call: PNS -> enable decoys; undetected
// eavesdropping or monitoring gap -> qber threshold -0.02 (floor 0.05);
// fuzz key mismatch -> strict digest verification; side channel -> zero
// leak weight. NoChange when no rule applies.
Remediation remediate(const std::vector<Finding>& findings, const SessionConfig& session,
                      const LeakModel& leak);

enum class ScenarioVerdict : uint8_t { Resilient = 0, MitigatedAfterN, VulnerableUnmitigated };

const char* scenario_verdict_name(ScenarioVerdict v);

struct StageEvent {
    uint64_t seq = 0;
    uint32_t scenario_index = 0;
    uint32_t iteration = 0;
    std::string stage;
    std::string detail;
};

struct IterationReport {
    uint32_t iteration = 0;
    std::vector<Finding> findings;
    std::map<std::string, double> metrics;
    std::vector<ForensicSummary> forensics;
    std::optional<Remediation> remediation; // applied after this iteration
};

struct Artifact {
    std::string name;
    std::vector<uint8_t> bytes;
};

struct ScenarioReport {
    uint32_t index = 0;
    ScenarioKind kind = ScenarioKind::TraditionalPlaybook;
    std::string name;
    uint32_t repetitions = 0;
    ScenarioVerdict verdict = ScenarioVerdict::Resilient;
    uint32_t iterations_run = 0;
    std::vector<IterationReport> iterations;
    std::string detector_digest; // when a detector was fitted
};

struct CampaignReport {
    std::string version;
    uint64_t master_seed = 0;
    std::string config_digest;
    double wall_clock_seconds = 0.0; // pinned to 0 for byte-stable reports
    std::vector<ScenarioReport> scenarios;
    std::vector<StageEvent> events;
    std::string telemetry_csv;
    std::vector<Artifact> artifacts; // replay files, detector blobs
    int exit_code = 0;               // 0 clean/mitigated, 2 unmitigated
};

CampaignReport run_campaign(const CampaignConfig& config);

enum class ReportFormat : uint8_t { Json = 0, Text };

// Json output is canonical: same report -> byte-identical text.
std::string render_report(const CampaignReport& report, ReportFormat format);

} // namespace qrt
