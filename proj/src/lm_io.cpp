#include "gatelab/lm_io.hpp"

#include <charconv>
#include <json.hpp>
#include <sstream>

#include "gatelab/report.hpp"

namespace gatelab::lm {

using nlohmann::json;

namespace {

TokenSeq token_array(const json& obj, const char* key, std::size_t line) {
    if (!obj.contains(key) || !obj[key].is_array()) {
        std::ostringstream os;
        os << "line " << line << ": field '" << key << "' must be an integer array";
        throw Error(ErrorKind::InvalidInput, os.str());
    }
    TokenSeq out;
    for (const auto& v : obj[key]) {
        if (!v.is_number_integer()) {
            std::ostringstream os;
            os << "line " << line << ": field '" << key << "' holds a non-integer";
            throw Error(ErrorKind::InvalidInput, os.str());
        }
        out.push_back(v.get<int>());
    }
    return out;
}

} // namespace

std::vector<PreferencePair> parse_pairs_jsonl(std::string_view text) {
    std::vector<PreferencePair> pairs;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto end = text.find('\n', pos);
        const auto line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
        pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            std::ostringstream os;
            os << "line " << line_no << ": " << e.what();
            throw Error(ErrorKind::InvalidInput, os.str());
        }
        if (!obj.is_object()) throw Error(ErrorKind::InvalidInput, "line " + std::to_string(line_no) + ": not an object");
        PreferencePair p;
        p.prompt = token_array(obj, "prompt", line_no);
        p.chosen = token_array(obj, "chosen", line_no);
        p.rejected = token_array(obj, "rejected", line_no);
        if (obj.contains("pair_id") && obj["pair_id"].is_string()) p.pair_id = obj["pair_id"].get<std::string>();
        else p.pair_id = "line" + std::to_string(line_no);
        pairs.push_back(std::move(p));
    }
    return pairs;
}

std::string pairs_to_jsonl(const std::vector<PreferencePair>& pairs) {
    std::string out;
    for (const auto& p : pairs) {
        json obj;
        obj["pair_id"] = p.pair_id;
        obj["prompt"] = p.prompt;
        obj["chosen"] = p.chosen;
        obj["rejected"] = p.rejected;
        out += obj.dump();
        out += '\n';
    }
    return out;
}

std::vector<PreferencePair> load_pairs(const std::filesystem::path& path) {
    return parse_pairs_jsonl(read_file(path));
}

std::string checkpoint_to_string(const TabularLM& model, std::string_view config_json) {
    std::string cfg(config_json);
    // The echo must stay on one line.
    cfg = json::parse(cfg).dump();
    std::string out = "gatelab-checkpoint " + std::to_string(kCheckpointVersion) + "\n";
    out += "vocab " + std::to_string(model.vocab) + "\n";
    out += "bos " + std::to_string(model.bos) + "\n";
    out += "config " + cfg + "\n";
    out += "theta\n";
    for (int r = 0; r < model.vocab; ++r) {
        const auto row = model.row(r);
        for (int c = 0; c < model.vocab; ++c) {
            if (c) out += ' ';
            out += format_double(row[c]);
        }
        out += '\n';
    }
    out += "end\n";
    return out;
}

namespace {

class LineReader {
public:
    explicit LineReader(std::string_view text) : text_(text) {}

    std::string_view next() {
        if (pos_ > text_.size()) throw Error(ErrorKind::InvalidInput, "checkpoint truncated");
        const auto end = text_.find('\n', pos_);
        std::string_view line = text_.substr(pos_, end == std::string_view::npos ? std::string_view::npos : end - pos_);
        pos_ = end == std::string_view::npos ? text_.size() + 1 : end + 1;
        return line;
    }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
};

std::string_view expect_key(std::string_view line, std::string_view key) {
    if (line.substr(0, key.size()) != key || line.size() < key.size() + 1 || line[key.size()] != ' ')
        throw Error(ErrorKind::InvalidInput, "checkpoint: expected '" + std::string(key) + "'");
    return line.substr(key.size() + 1);
}

int parse_int(std::string_view s) {
    int v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw Error(ErrorKind::InvalidInput, "checkpoint: bad integer '" + std::string(s) + "'");
    return v;
}

} // namespace

Checkpoint parse_checkpoint(std::string_view text) {
    LineReader in(text);
    const int version = parse_int(expect_key(in.next(), "gatelab-checkpoint"));
    if (version != kCheckpointVersion)
        throw Error(ErrorKind::InvalidInput, "unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    const int vocab = parse_int(expect_key(in.next(), "vocab"));
    const int bos = parse_int(expect_key(in.next(), "bos"));
    ck.model = TabularLM::uniform(vocab, bos);
    ck.config_json = std::string(expect_key(in.next(), "config"));
    if (in.next() != "theta") throw Error(ErrorKind::InvalidInput, "checkpoint: expected 'theta'");
    for (int r = 0; r < vocab; ++r) {
        const auto line = in.next();
        auto row = ck.model.row(r);
        const char* p = line.data();
        const char* end = line.data() + line.size();
        for (int c = 0; c < vocab; ++c) {
            while (p < end && *p == ' ') ++p;
            const auto res = std::from_chars(p, end, row[c]);
            if (res.ec != std::errc())
                throw Error(ErrorKind::InvalidInput, "checkpoint: bad value in row " + std::to_string(r));
            p = res.ptr;
        }
        while (p < end && *p == ' ') ++p;
        if (p != end) throw Error(ErrorKind::InvalidInput, "checkpoint: extra values in row " + std::to_string(r));
    }
    if (in.next() != "end") throw Error(ErrorKind::InvalidInput, "checkpoint: missing 'end'");
    return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return parse_checkpoint(read_file(path));
}

void save_checkpoint(const std::filesystem::path& path, const TabularLM& model,
                     std::string_view config_json) {
    write_file(path, checkpoint_to_string(model, config_json));
}

std::string fingerprint(const TabularLM& model) { return sha256_hex(checkpoint_to_string(model)); }

} // namespace gatelab::lm
