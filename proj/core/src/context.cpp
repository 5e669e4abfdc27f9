#include "webgym/context.hpp"

#include "json.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace webgym {

using nlohmann::json;

std::string observation_section(std::string_view observation) {
    std::string out = "Observation:\n";
    out += observation;
    out += "\nAction:\n";
    return out;
}

std::string completed_turn_section(std::string_view observation, std::string_view agent_text) {
    std::string out = observation_section(observation);
    out += agent_text;
    out += '\n';
    return out;
}

MaterializedContext compress(const std::vector<Turn>& history, std::string_view placeholder) {
    if (history.empty()) throw std::invalid_argument("compress: history must be nonempty");

    MaterializedContext ctx;
    for (size_t i = 0; i < history.size(); ++i) {
        const Turn& turn = history[i];
        const bool last = i + 1 == history.size();
        const std::string_view obs = last ? std::string_view(turn.observation_text) : placeholder;
        append_tokens(ctx.tokens, observation_section(obs));
        if (!turn.agent_text.empty()) {
            TokenSpan span;
            span.begin = ctx.tokens.size();
            append_tokens(ctx.tokens, turn.agent_text);
            span.end = ctx.tokens.size();
            ctx.turn_spans.push_back(span);
            if (!last) append_tokens(ctx.tokens, "\n");
        }
    }
    ctx.targets = ctx.tokens;
    ctx.loss_mask = build_loss_mask(ctx);
    return ctx;
}

std::vector<uint8_t> build_loss_mask(const MaterializedContext& ctx) {
    std::vector<uint8_t> mask(ctx.tokens.size(), 0);
    for (const TokenSpan& span : ctx.turn_spans)
        for (size_t i = span.begin; i < span.end && i < mask.size(); ++i) mask[i] = 1;
    return mask;
}

MaterializedContext make_training_context(const std::vector<Token>& prompt_tokens,
                                          const std::vector<Token>& action_tokens) {
    MaterializedContext ctx;
    ctx.tokens = prompt_tokens;
    TokenSpan span;
    span.begin = ctx.tokens.size();
    ctx.tokens.insert(ctx.tokens.end(), action_tokens.begin(), action_tokens.end());
    span.end = ctx.tokens.size();
    ctx.turn_spans.push_back(span);
    ctx.targets = ctx.tokens;
    ctx.loss_mask = build_loss_mask(ctx);
    return ctx;
}

std::vector<Token> masked_targets(const MaterializedContext& ctx) {
    std::vector<Token> out;
    for (size_t i = 0; i < ctx.targets.size(); ++i)
        if (ctx.loss_mask[i]) out.push_back(ctx.targets[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace {

// Agent texts are raw bytes from a byte-level sampler and need not be valid
// UTF-8. Text fields are stored byte->U+00XX (latin-1 style), which JSON can
// carry losslessly; ASCII passes through unchanged.
std::string bytes_to_json_text(std::string_view bytes) {
    std::string out;
    out.reserve(bytes.size());
    for (unsigned char c : bytes) {
        if (c < 0x80) {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back(static_cast<char>(0xC0 | (c >> 6)));
            out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
        }
    }
    return out;
}

std::string json_text_to_bytes(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (size_t i = 0; i < text.size(); ++i) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (c < 0x80) {
            out.push_back(static_cast<char>(c));
        } else if ((c & 0xE0) == 0xC0 && i + 1 < text.size()) {
            const auto c2 = static_cast<unsigned char>(text[i + 1]);
            const int code = ((c & 0x1F) << 6) | (c2 & 0x3F);
            if (code > 0xFF) throw std::invalid_argument("trajectory file: codepoint outside byte range");
            out.push_back(static_cast<char>(code));
            ++i;
        } else {
            throw std::invalid_argument("trajectory file: malformed text encoding");
        }
    }
    return out;
}

} // namespace

std::string episodes_to_jsonl(const std::vector<EpisodeRecord>& episodes) {
    std::string out;
    for (const EpisodeRecord& ep : episodes) {
        json header;
        header["episode"] = {{"task_id", ep.task_id},
                             {"instance", ep.instance},
                             {"reward", ep.reward},
                             {"interactions", ep.interactions},
                             {"agent_tokens", ep.agent_tokens}};
        out += header.dump();
        out += '\n';
        for (const TurnRecord& turn : ep.turns) {
            json j;
            j["round"] = turn.round;
            j["observation"] = bytes_to_json_text(turn.observation);
            if (turn.remarks) j["remarks"] = bytes_to_json_text(*turn.remarks);
            j["agent_text"] = bytes_to_json_text(turn.agent_text);
            j["action"] = bytes_to_json_text(turn.action);
            if (turn.old_logprobs) j["old_logprobs"] = *turn.old_logprobs;
            json line;
            line["turn"] = std::move(j);
            out += line.dump();
            out += '\n';
        }
    }
    return out;
}

std::vector<EpisodeRecord> parse_episodes_jsonl(const std::string& text) {
    std::vector<EpisodeRecord> episodes;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        if (j.contains("episode")) {
            const json& h = j.at("episode");
            EpisodeRecord ep;
            ep.task_id = h.at("task_id").get<std::string>();
            ep.instance = h.at("instance").get<int>();
            ep.reward = h.at("reward").get<int>();
            ep.interactions = h.at("interactions").get<int>();
            ep.agent_tokens = h.at("agent_tokens").get<int64_t>();
            episodes.push_back(std::move(ep));
        } else if (j.contains("turn")) {
            if (episodes.empty()) throw std::invalid_argument("trajectory file: turn before episode header");
            const json& t = j.at("turn");
            TurnRecord turn;
            turn.round = t.at("round").get<int>();
            turn.observation = json_text_to_bytes(t.at("observation").get<std::string>());
            if (t.contains("remarks")) turn.remarks = json_text_to_bytes(t.at("remarks").get<std::string>());
            turn.agent_text = json_text_to_bytes(t.at("agent_text").get<std::string>());
            turn.action = json_text_to_bytes(t.at("action").get<std::string>());
            if (t.contains("old_logprobs")) turn.old_logprobs = t.at("old_logprobs").get<std::vector<double>>();
            episodes.back().turns.push_back(std::move(turn));
        } else {
            throw std::invalid_argument("trajectory file: unrecognized record");
        }
    }
    return episodes;
}

void save_episodes(const std::string& path, const std::vector<EpisodeRecord>& episodes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write trajectory file: " + path);
    out << episodes_to_jsonl(episodes);
}

std::vector<EpisodeRecord> load_episodes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read trajectory file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_episodes_jsonl(buf.str());
}

} // namespace webgym
