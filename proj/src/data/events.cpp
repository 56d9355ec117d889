#include "data/events.hpp"

#include "common/error.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace attnmix::data {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

int64_t parse_ts(const std::string& field, size_t line_no) {
    if (field.empty()) raise(Errc::parse_error, "line " + std::to_string(line_no) + ": empty timestamp");
    size_t pos = 0;
    int64_t value = 0;
    try {
        value = std::stoll(field, &pos);
    } catch (const std::exception&) {
        raise(Errc::parse_error, "line " + std::to_string(line_no) + ": bad timestamp '" + field + "'");
    }
    if (pos != field.size())
        raise(Errc::parse_error, "line " + std::to_string(line_no) + ": bad timestamp '" + field + "'");
    return value;
}

} // namespace

EventFormat format_from_token(const std::string& token) {
    if (token == "csv") return EventFormat::csv_session;
    if (token == "tsv") return EventFormat::tsv_user_events;
    raise(Errc::invalid_config, "unknown input format '" + token + "' (expected csv|tsv)");
}

const char* format_token(EventFormat f) {
    return f == EventFormat::csv_session ? "csv" : "tsv";
}

std::vector<RawSession> load_events(const std::string& path, EventFormat format) {
    std::ifstream f(path);
    if (!f) raise(Errc::io_error, "cannot open " + path);

    const char sep = format == EventFormat::csv_session ? ',' : '\t';
    std::string line;
    size_t line_no = 0;

    struct Row {
        std::string key, item;
        int64_t ts;
        size_t order;
    };
    std::vector<Row> rows;

    while (std::getline(f, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        std::vector<std::string> fields = split(line, sep);
        if (line_no == 1) {
            // format A requires its header; format B may carry one
            if (format == EventFormat::csv_session) {
                if (fields.size() != 3 || fields[0] != "session_id" || fields[1] != "item_id" ||
                    fields[2] != "timestamp")
                    raise(Errc::parse_error, "line 1: expected header session_id,item_id,timestamp");
                continue;
            }
            if (fields.size() == 3 && fields[0] == "user_id" && fields[1] == "item_id" &&
                fields[2] == "timestamp")
                continue;
        }
        if (fields.size() != 3)
            raise(Errc::parse_error,
                  "line " + std::to_string(line_no) + ": expected 3 fields, got " + std::to_string(fields.size()));
        if (fields[0].empty() || fields[1].empty())
            raise(Errc::parse_error, "line " + std::to_string(line_no) + ": empty id field");
        rows.push_back({fields[0], fields[1], parse_ts(fields[2], line_no), rows.size()});
    }
    if (rows.empty()) raise(Errc::empty_input, "no events in " + path);

    std::map<std::string, std::vector<Row>> groups;
    for (Row& r : rows) groups[r.key].push_back(std::move(r));

    std::vector<RawSession> sessions;
    sessions.reserve(groups.size());
    for (auto& [key, grp] : groups) {
        std::stable_sort(grp.begin(), grp.end(), [](const Row& a, const Row& b) {
            if (a.ts != b.ts) return a.ts < b.ts;
            return a.order < b.order;
        });
        RawSession s;
        s.key = key;
        s.events.reserve(grp.size());
        for (const Row& r : grp) s.events.push_back({r.item, r.ts});
        sessions.push_back(std::move(s));
    }
    std::sort(sessions.begin(), sessions.end(), [](const RawSession& a, const RawSession& b) {
        if (a.end_ts() != b.end_ts()) return a.end_ts() < b.end_ts();
        return a.key < b.key;
    });
    return sessions;
}

std::vector<RawSession> sessionize_by_gap(const std::vector<RawSession>& streams, int64_t gap_seconds) {
    if (gap_seconds <= 0) raise(Errc::invalid_rule, "sessionization gap must be positive");
    std::vector<RawSession> out;
    for (const RawSession& stream : streams) {
        size_t piece = 0;
        RawSession cur;
        cur.key = stream.key + "#0";
        for (const RawEvent& e : stream.events) {
            if (!cur.events.empty() && e.timestamp - cur.events.back().timestamp > gap_seconds) {
                out.push_back(std::move(cur));
                ++piece;
                cur = RawSession{};
                cur.key = stream.key + "#" + std::to_string(piece);
            }
            cur.events.push_back(e);
        }
        if (!cur.events.empty()) out.push_back(std::move(cur));
    }
    std::sort(out.begin(), out.end(), [](const RawSession& a, const RawSession& b) {
        if (a.end_ts() != b.end_ts()) return a.end_ts() < b.end_ts();
        return a.key < b.key;
    });
    return out;
}

} // namespace attnmix::data
