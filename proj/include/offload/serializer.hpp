#pragma once

// Text rendering of observations for language-model policies, the four
// prompt perturbations, a tolerant parser that recovers the numeric state
// from any of them, and oracle-labelled dataset export.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "offload/simulator.hpp"

namespace offload {

enum class PromptMode { standard, shuffled_params, noisy_text, unit_variation };

std::string to_string(PromptMode mode);
/// Throws ConfigError("style") for unknown names.
PromptMode prompt_mode_from_string(std::string_view name);

struct PromptStyle {
    PromptMode mode = PromptMode::standard;
    std::uint64_t noise_seed = 0;
    int significant_digits = 8;
};

enum class Unit { ghz, mhz, mbits, kbits, mbps, kbps, seconds, millis, cycles_per_bit, gcycles_per_mbit, tasks };

std::string_view unit_token(Unit unit);

struct PromptField {
    std::string key;
    std::vector<double> values;  // one value, or the sequence of a history field
    Unit unit = Unit::tasks;
    bool sequence = false;
};

struct PromptBlock {
    std::string title;  // "Task" or "Server <k>"
    std::vector<PromptField> fields;
};

/// Structured prompt prior to rendering.
struct PromptDoc {
    std::vector<PromptBlock> blocks;
};

/// Lines starting with this marker are filler inserted by the noisy mode.
inline constexpr std::string_view kFillerMarker = "(note) ";

PromptDoc build_prompt(const SystemState& state, double slot_seconds);

/// Renders a doc. Non-standard modes apply their perturbation.
std::string render(const PromptDoc& doc, const PromptStyle& style);

std::string serialize(const SystemState& state, double slot_seconds, const PromptStyle& style);

/// Applies a non-standard perturbation to an already built doc.
std::string perturb(const PromptDoc& doc, const PromptStyle& style);

/// Removes filler lines inserted by the noisy mode.
std::string strip_filler(std::string_view prompt);

/// Raw key -> value text for every block, in block order. Filler is skipped.
std::vector<std::map<std::string, std::string>> prompt_fields(std::string_view prompt);

struct ParsedPrompt {
    SystemState state;
    double slot_seconds = 0.0;
};

/// Recovers the numeric state from any rendering mode. Throws ParseError on
/// missing fields or unknown units.
ParsedPrompt parse_prompt(std::string_view prompt);

std::string label_text(int action);

nlohmann::ordered_json state_to_json(const SystemState& state);
SystemState state_from_json(const nlohmann::json& j);

struct DatasetRecord {
    std::string prompt;
    int label_action = 0;
    std::string label_text;
    nlohmann::ordered_json state_digest;
};

nlohmann::ordered_json record_to_json(const DatasetRecord& record);
DatasetRecord record_from_json(const nlohmann::json& j);

/// Oracle-labelled records built from states visited by seeded uniform-random
/// rollouts. Deterministic per (config.seed, style).
std::vector<DatasetRecord> generate_dataset(const SimConfig& config, int count, const PromptStyle& style);

/// Writes `count` records as JSON lines. The file appears atomically; on
/// failure nothing is left at `path`.
void export_dataset(const SimConfig& config, int count, const PromptStyle& style, const std::string& path);

std::vector<DatasetRecord> load_dataset(const std::string& path);

}  // namespace offload
