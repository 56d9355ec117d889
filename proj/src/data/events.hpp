#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace attnmix::data {

struct RawEvent {
    std::string item;
    int64_t timestamp = 0;
};

// One grouped event stream: a session (format A) or a whole user history
// (format B) awaiting gap sessionization.
struct RawSession {
    std::string key;
    std::vector<RawEvent> events; // timestamp-ordered
    int64_t end_ts() const { return events.empty() ? 0 : events.back().timestamp; }
};

enum class EventFormat { csv_session, tsv_user_events };

EventFormat format_from_token(const std::string& token);
const char* format_token(EventFormat f);

// Format A: header "session_id,item_id,timestamp", epoch-second timestamps.
// Format B: tab-separated user_id, item_id, timestamp rows.
// Events come back grouped by key, sorted by timestamp inside each group
// (ties keep file order), groups ordered by (end timestamp, key).
std::vector<RawSession> load_events(const std::string& path, EventFormat format);

// Cuts each stream whenever the gap between consecutive events exceeds
// gap_seconds; piece k of stream u is keyed "u#k".
std::vector<RawSession> sessionize_by_gap(const std::vector<RawSession>& streams, int64_t gap_seconds);

} // namespace attnmix::data
