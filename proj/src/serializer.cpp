#include "offload/serializer.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "offload/oracle.hpp"

namespace offload {

namespace {

constexpr std::string_view kHeader = "You are the task offloading controller of a mobile edge computing network.";
constexpr std::string_view kInstruction =
    "Choose one execution location for the task, weighing its own latency against the congestion it "
    "leaves on each server. Reply with exactly \"Execute Locally\" or \"Offload to Server <k>\".";

constexpr std::array<std::string_view, 6> kFillers = {
    "The maintenance window for the core network is scheduled for next week.",
    "Operators reported that the cafeteria near the base station reopened.",
    "This message was generated by the monitoring daemon.",
    "Firmware on the rooftop antennas was last updated in spring.",
    "Ambient temperature in the equipment room is within normal range.",
    "No alarms were raised during the previous reporting period.",
};

struct UnitInfo {
    Unit unit;
    std::string_view token;
    double to_si;  // multiply a value in this unit to get SI base
};

constexpr std::array<UnitInfo, 11> kUnits = {{
    {Unit::ghz, "GHz", 1e9},
    {Unit::mhz, "MHz", 1e6},
    {Unit::mbits, "Mbits", 1e6},
    {Unit::kbits, "kbits", 1e3},
    {Unit::mbps, "Mbps", 1e6},
    {Unit::kbps, "kbps", 1e3},
    {Unit::seconds, "s", 1.0},
    {Unit::millis, "ms", 1e-3},
    {Unit::cycles_per_bit, "cycles/bit", 1.0},
    {Unit::gcycles_per_mbit, "Gcycles/Mbit", 1e3},
    {Unit::tasks, "tasks", 1.0},
}};

const UnitInfo& info(Unit u) {
    for (const auto& i : kUnits) {
        if (i.unit == u) return i;
    }
    return kUnits.back();
}

/// Equivalent unit at a different scale, with the factor applied to values.
std::pair<Unit, double> varied(Unit u) {
    switch (u) {
        case Unit::ghz: return {Unit::mhz, 1000.0};
        case Unit::mbits: return {Unit::kbits, 1000.0};
        case Unit::mbps: return {Unit::kbps, 1000.0};
        case Unit::seconds: return {Unit::millis, 1000.0};
        case Unit::cycles_per_bit: return {Unit::gcycles_per_mbit, 1e-3};
        default: return {u, 1.0};
    }
}

std::string format_number(double v, int digits) {
    std::array<char, 64> buf{};
    auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::general, digits);
    std::string s(buf.data(), res.ptr);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

std::string render_field(const PromptField& f, int digits) {
    std::string out = f.key + ": ";
    if (f.sequence) {
        out += '[';
        for (std::size_t i = 0; i < f.values.size(); ++i) {
            if (i) out += ", ";
            out += format_number(f.values[i], digits);
        }
        out += ']';
    } else if (f.unit == Unit::tasks) {
        out += std::to_string(static_cast<long long>(f.values.front()));
    } else {
        out += format_number(f.values.front(), digits);
    }
    out += ' ';
    out += unit_token(f.unit);
    return out;
}

std::string render_blocks(const std::vector<PromptBlock>& blocks, const PromptStyle& style, Rng* filler_rng) {
    std::ostringstream out;
    out << kHeader << '\n';
    auto maybe_filler = [&] {
        if (filler_rng == nullptr || !filler_rng->bernoulli(0.5)) return;
        out << kFillerMarker << kFillers[filler_rng->index(kFillers.size())] << '\n';
    };
    for (const auto& b : blocks) {
        out << '\n';
        maybe_filler();
        out << "### " << b.title << '\n';
        for (const auto& f : b.fields) out << render_field(f, style.significant_digits) << '\n';
    }
    out << '\n';
    maybe_filler();
    out << "### Decision\n" << kInstruction << '\n';
    return out.str();
}

double parse_double(std::string_view s, std::string_view context) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ParseError("malformed number in prompt", std::string(context));
    }
    return v;
}

const UnitInfo& unit_from_token(std::string_view token, std::string_view context) {
    for (const auto& i : kUnits) {
        if (i.token == token) return i;
    }
    throw ParseError("unknown unit '" + std::string(token) + "'", std::string(context));
}

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            if (start < text.size()) lines.push_back(text.substr(start));
            break;
        }
        lines.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

bool is_filler(std::string_view line) { return line.substr(0, kFillerMarker.size()) == kFillerMarker; }

// Values of one "key: value unit" line converted to SI.
std::vector<double> si_values(std::string_view rest, std::string_view line) {
    std::vector<double> values;
    std::string_view unit_part;
    if (!rest.empty() && rest.front() == '[') {
        const auto close = rest.find(']');
        if (close == std::string_view::npos) throw ParseError("unterminated sequence", std::string(line));
        std::string_view body = rest.substr(1, close - 1);
        while (!body.empty()) {
            const auto comma = body.find(',');
            values.push_back(parse_double(body.substr(0, comma), line));
            if (comma == std::string_view::npos) break;
            body.remove_prefix(comma + 1);
        }
        unit_part = rest.substr(close + 1);
    } else {
        const auto sp = rest.find(' ');
        if (sp == std::string_view::npos) throw ParseError("missing unit", std::string(line));
        values.push_back(parse_double(rest.substr(0, sp), line));
        unit_part = rest.substr(sp);
    }
    while (!unit_part.empty() && unit_part.front() == ' ') unit_part.remove_prefix(1);
    const double scale = unit_from_token(unit_part, line).to_si;
    for (auto& v : values) v *= scale;
    return values;
}

}  // namespace

std::string to_string(PromptMode mode) {
    switch (mode) {
        case PromptMode::standard: return "standard";
        case PromptMode::shuffled_params: return "shuffled_params";
        case PromptMode::noisy_text: return "noisy_text";
        case PromptMode::unit_variation: return "unit_variation";
    }
    return "standard";
}

PromptMode prompt_mode_from_string(std::string_view name) {
    for (auto m : {PromptMode::standard, PromptMode::shuffled_params, PromptMode::noisy_text,
                   PromptMode::unit_variation}) {
        if (to_string(m) == name) return m;
    }
    throw ConfigError("style", "unknown prompt mode '" + std::string(name) + "'");
}

std::string_view unit_token(Unit unit) { return info(unit).token; }

PromptDoc build_prompt(const SystemState& state, double slot_seconds) {
    PromptDoc doc;
    PromptBlock task{"Task", {}};
    const auto& t = state.task;
    task.fields.push_back({"size", {t.size_bits / kMega}, Unit::mbits, false});
    task.fields.push_back({"deadline", {t.deadline_slots * slot_seconds}, Unit::seconds, false});
    task.fields.push_back({"slot_duration", {slot_seconds}, Unit::seconds, false});
    task.fields.push_back({"compute_density", {t.density_cycles_per_bit}, Unit::cycles_per_bit, false});
    task.fields.push_back({"local_cpu", {state.device.local_freq_hz / kGiga}, Unit::ghz, false});
    task.fields.push_back({"local_backlog", {state.device.local_backlog_bits / kMega}, Unit::mbits, false});
    doc.blocks.push_back(std::move(task));

    for (std::size_t i = 0; i < state.servers.size(); ++i) {
        const auto& s = state.servers[i];
        PromptBlock b{"Server " + std::to_string(i + 1), {}};
        b.fields.push_back({"capacity", {s.capacity_hz / kGiga}, Unit::ghz, false});
        b.fields.push_back({"active_tasks", {static_cast<double>(s.active_tasks)}, Unit::tasks, false});
        b.fields.push_back({"backlog", {s.backlog_bits / kMega}, Unit::mbits, false});
        b.fields.push_back({"uplink_rate", {state.uplink_rates_bps[i] / kMega}, Unit::mbps, false});
        std::vector<double> hist;
        for (double h : s.history) hist.push_back(h / kMega);
        b.fields.push_back({"backlog_history", std::move(hist), Unit::mbits, true});
        doc.blocks.push_back(std::move(b));
    }
    return doc;
}

std::string perturb(const PromptDoc& doc, const PromptStyle& style) {
    Rng rng = Rng::stream(style.noise_seed, streams::perturbation);
    switch (style.mode) {
        case PromptMode::standard: return render_blocks(doc.blocks, style, nullptr);
        case PromptMode::noisy_text: return render_blocks(doc.blocks, style, &rng);
        case PromptMode::shuffled_params: {
            auto blocks = doc.blocks;
            for (auto& b : blocks) {
                if (b.title == "Task") continue;
                auto& f = b.fields;
                for (std::size_t i = f.size(); i > 1; --i) std::swap(f[i - 1], f[rng.index(i)]);
            }
            return render_blocks(blocks, style, nullptr);
        }
        case PromptMode::unit_variation: {
            auto blocks = doc.blocks;
            for (auto& b : blocks) {
                for (auto& f : b.fields) {
                    const auto [unit, factor] = varied(f.unit);
                    f.unit = unit;
                    for (auto& v : f.values) v *= factor;
                }
            }
            return render_blocks(blocks, style, nullptr);
        }
    }
    return render_blocks(doc.blocks, style, nullptr);
}

std::string render(const PromptDoc& doc, const PromptStyle& style) { return perturb(doc, style); }

std::string serialize(const SystemState& state, double slot_seconds, const PromptStyle& style) {
    return render(build_prompt(state, slot_seconds), style);
}

std::string strip_filler(std::string_view prompt) {
    std::string out;
    for (auto line : split_lines(prompt)) {
        if (is_filler(line)) continue;
        out.append(line);
        out += '\n';
    }
    return out;
}

std::vector<std::map<std::string, std::string>> prompt_fields(std::string_view prompt) {
    std::vector<std::map<std::string, std::string>> blocks;
    bool in_block = false;
    for (auto line : split_lines(prompt)) {
        if (is_filler(line)) continue;
        if (line.substr(0, 4) == "### ") {
            in_block = line.substr(4) != "Decision";
            if (in_block) blocks.emplace_back();
            continue;
        }
        const auto colon = line.find(": ");
        if (!in_block || colon == std::string_view::npos) continue;
        blocks.back()[std::string(line.substr(0, colon))] = std::string(line.substr(colon + 2));
    }
    return blocks;
}

ParsedPrompt parse_prompt(std::string_view prompt) {
    ParsedPrompt out;
    auto& st = out.state;
    double deadline_s = -1.0;
    bool have_task = false;
    enum class Section { none, task, server } section = Section::none;

    for (auto line : split_lines(prompt)) {
        if (is_filler(line)) continue;
        if (line.substr(0, 4) == "### ") {
            const auto title = line.substr(4);
            if (title == "Task") {
                section = Section::task;
                have_task = true;
            } else if (title.substr(0, 7) == "Server ") {
                section = Section::server;
                ServerState s;
                s.id = static_cast<int>(parse_double(title.substr(7), line));
                st.servers.push_back(s);
                st.uplink_rates_bps.push_back(0.0);
            } else {
                section = Section::none;
            }
            continue;
        }
        const auto colon = line.find(": ");
        if (section == Section::none || colon == std::string_view::npos) continue;
        const auto key = line.substr(0, colon);
        const auto values = si_values(line.substr(colon + 2), line);
        const double v = values.empty() ? 0.0 : values.front();

        if (section == Section::task) {
            if (key == "size") st.task.size_bits = v;
            else if (key == "deadline") deadline_s = v;
            else if (key == "slot_duration") out.slot_seconds = v;
            else if (key == "compute_density") st.task.density_cycles_per_bit = v;
            else if (key == "local_cpu") st.device.local_freq_hz = v;
            else if (key == "local_backlog") st.device.local_backlog_bits = v;
        } else {
            auto& s = st.servers.back();
            if (key == "capacity") s.capacity_hz = v;
            else if (key == "active_tasks") s.active_tasks = static_cast<int>(v);
            else if (key == "backlog") s.backlog_bits = v;
            else if (key == "uplink_rate") st.uplink_rates_bps.back() = v;
            else if (key == "backlog_history") s.history = values;
        }
    }
    if (!have_task) throw ParseError("prompt has no task block", std::string(prompt));
    if (!(out.slot_seconds > 0.0) || deadline_s < 0.0) {
        throw ParseError("prompt lacks slot duration or deadline", std::string(prompt));
    }
    st.task.deadline_slots = deadline_s / out.slot_seconds;
    return out;
}

std::string label_text(int action) {
    return action == 0 ? "Execute Locally" : "Offload to Server " + std::to_string(action);
}

nlohmann::ordered_json state_to_json(const SystemState& state) {
    nlohmann::ordered_json j;
    j["slot"] = state.slot;
    j["task"] = {{"id", state.task.id},
                 {"user", state.task.user},
                 {"size_bits", state.task.size_bits},
                 {"density_cycles_per_bit", state.task.density_cycles_per_bit},
                 {"deadline_slots", state.task.deadline_slots}};
    j["device"] = {{"local_freq_hz", state.device.local_freq_hz},
                   {"local_backlog_bits", state.device.local_backlog_bits}};
    j["uplink_rates_bps"] = state.uplink_rates_bps;
    auto servers = nlohmann::ordered_json::array();
    for (const auto& s : state.servers) {
        servers.push_back({{"id", s.id},
                           {"capacity_hz", s.capacity_hz},
                           {"active_tasks", s.active_tasks},
                           {"backlog_bits", s.backlog_bits},
                           {"history", s.history}});
    }
    j["servers"] = std::move(servers);
    return j;
}

SystemState state_from_json(const nlohmann::json& j) {
    SystemState s;
    s.slot = j.at("slot").get<int>();
    const auto& t = j.at("task");
    s.task.id = t.at("id").get<int>();
    s.task.user = t.at("user").get<int>();
    s.task.size_bits = t.at("size_bits").get<double>();
    s.task.density_cycles_per_bit = t.at("density_cycles_per_bit").get<double>();
    s.task.deadline_slots = t.at("deadline_slots").get<double>();
    s.device.local_freq_hz = j.at("device").at("local_freq_hz").get<double>();
    s.device.local_backlog_bits = j.at("device").at("local_backlog_bits").get<double>();
    s.uplink_rates_bps = j.at("uplink_rates_bps").get<std::vector<double>>();
    for (const auto& js : j.at("servers")) {
        ServerState srv;
        srv.id = js.at("id").get<int>();
        srv.capacity_hz = js.at("capacity_hz").get<double>();
        srv.active_tasks = js.at("active_tasks").get<int>();
        srv.backlog_bits = js.at("backlog_bits").get<double>();
        srv.history = js.at("history").get<std::vector<double>>();
        s.servers.push_back(std::move(srv));
    }
    return s;
}

nlohmann::ordered_json record_to_json(const DatasetRecord& record) {
    nlohmann::ordered_json j;
    j["prompt"] = record.prompt;
    j["label_action"] = record.label_action;
    j["label_text"] = record.label_text;
    j["state_digest"] = record.state_digest;
    return j;
}

DatasetRecord record_from_json(const nlohmann::json& j) {
    DatasetRecord r;
    r.prompt = j.at("prompt").get<std::string>();
    r.label_action = j.at("label_action").get<int>();
    r.label_text = j.at("label_text").get<std::string>();
    r.state_digest = j.at("state_digest");
    return r;
}

std::vector<DatasetRecord> generate_dataset(const SimConfig& config, int count, const PromptStyle& style) {
    if (count < 1) throw ConfigError("count", "must be at least 1");
    config.validate();
    if (config.arrival_prob <= 0.0) throw ConfigError("arrival_prob", "must be positive to sample states");

    const CostParams cost = config.cost_params();
    Rng episode_seeds = Rng::stream(config.seed, streams::dataset);
    std::vector<DatasetRecord> records;
    records.reserve(static_cast<std::size_t>(count));

    while (static_cast<int>(records.size()) < count) {
        SimConfig c = config;
        c.seed = episode_seeds.next();
        Environment env(c);
        Rng behaviour = Rng::stream(c.seed, streams::baseline);
        for (int t = 0; t < c.episode_slots && static_cast<int>(records.size()) < count; ++t) {
            for (const Task& task : env.sample_arrivals()) {
                if (static_cast<int>(records.size()) >= count) break;
                const SystemState state = env.observe(task);
                PromptStyle record_style = style;
                record_style.noise_seed = derive_seed(style.noise_seed, records.size());
                DatasetRecord rec;
                rec.prompt = serialize(state, c.slot_seconds, record_style);
                rec.label_action = oracle_action(state, cost).action;
                rec.label_text = label_text(rec.label_action);
                rec.state_digest = state_to_json(state);
                records.push_back(std::move(rec));
                env.step(task, static_cast<int>(behaviour.index(static_cast<std::uint64_t>(state.num_actions()))));
            }
        }
    }
    return records;
}

void export_dataset(const SimConfig& config, int count, const PromptStyle& style, const std::string& path) {
    const auto records = generate_dataset(config, count, style);
    const std::string tmp = path + ".partial";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open dataset file for writing: " + path);
        for (const auto& r : records) f << record_to_json(r).dump() << '\n';
        f.flush();
        if (!f) {
            f.close();
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw IoError("failed writing dataset file: " + path);
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot move dataset into place: " + path);
    }
}

std::vector<DatasetRecord> load_dataset(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open dataset file: " + path);
    std::vector<DatasetRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(record_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& ex) {
            throw IoError(path + ":" + std::to_string(lineno) + ": " + ex.what());
        }
    }
    return out;
}

}  // namespace offload
