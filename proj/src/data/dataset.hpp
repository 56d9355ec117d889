#pragma once

#include "data/events.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace attnmix::data {

// Dense item index map. Index 0 is reserved for padding and never maps to a
// real item; real items occupy 1..|V|.
struct Vocabulary {
    std::vector<std::string> ids;  // ids[0] == "" (padding slot)
    std::vector<int64_t> freq;     // aligned with ids
    int64_t items() const { return static_cast<int64_t>(ids.size()) - 1; }
    int32_t lookup(const std::string& id) const; // 0 when unknown
    uint64_t content_hash() const;

    void rebuild_index();

private:
    std::vector<std::pair<std::string, int32_t>> index_; // sorted by id
};

struct Session {
    std::vector<int32_t> items;
    std::string id;
    int64_t end_ts = 0;
};

struct TrainingExample {
    std::vector<int32_t> prefix;
    int32_t target = 0;
};

struct SplitRule {
    enum class Kind { last_week, last_fraction };
    Kind kind = Kind::last_fraction;
    double fraction = 0.2;

    static SplitRule parse(const std::string& token, double fraction);
    std::string describe() const;
};

struct Provenance {
    std::string source;
    std::string format;
    int64_t min_session_len = 2;
    int64_t min_item_freq = 5;
    int64_t top_k_items = 0;
    std::string split_rule;
    int64_t gap_seconds = 0;
    double validation_fraction = 0.2;

    int64_t raw_events = 0;
    int64_t raw_streams = 0;
    int64_t clicks = 0;         // events surviving the filter
    int64_t sessions = 0;       // filtered sessions before augmentation
    int64_t items = 0;          // |V|
    double avg_length = 0.0;    // clicks / sessions
    int64_t train_sessions = 0;
    int64_t test_sessions = 0;
    int64_t dropped_test_events = 0;   // test events on items unseen in train
    int64_t dropped_test_sessions = 0; // test sessions too short after dropping
    int64_t dropped_short_sessions = 0;
    int64_t augmented_examples = 0; // train + validation + test
    std::string config_json;        // effective config echo
};

struct SessionDataset {
    Vocabulary vocab;
    std::vector<TrainingExample> train;
    std::vector<TrainingExample> validation;
    std::vector<TrainingExample> test;
    Provenance prov;
};

// Iterative filter to a fixpoint: drop items below min_item_freq (and outside
// the top_k most frequent when top_k > 0, ties broken by smaller external
// id), then sessions shorter than min_session_len, re-counting until stable;
// survivors are indexed densely in first-appearance order.
std::pair<std::vector<Session>, Vocabulary> filter_and_index(const std::vector<RawSession>& raw,
                                                             int64_t min_session_len,
                                                             int64_t min_item_freq,
                                                             int64_t top_k_items);

// Prefix expansion: [v1..vn] -> ([v1..vk], v_{k+1}) for k = 1..n-1.
std::vector<TrainingExample> augment(const std::vector<Session>& sessions);

// Test set is strictly later than train by session end timestamp.
std::pair<std::vector<Session>, std::vector<Session>> temporal_split(std::vector<Session> sessions,
                                                                     const SplitRule& rule);

struct Batch {
    std::vector<int32_t> items; // rows x width, right-padded with 0
    std::vector<uint8_t> mask;  // rows x width validity
    std::vector<int32_t> lengths;
    std::vector<int32_t> targets;
    int64_t rows = 0;
    int64_t width = 0;
    int64_t index = 0; // position in the epoch
};

class BatchIter {
public:
    // shuffle_seed nullopt keeps input order.
    BatchIter(const std::vector<TrainingExample>& examples, int64_t batch_size,
              std::optional<uint64_t> shuffle_seed);
    bool next(Batch& out);
    void reset(std::optional<uint64_t> shuffle_seed);

private:
    const std::vector<TrainingExample>& examples_;
    std::vector<size_t> order_;
    int64_t batch_size_;
    size_t pos_ = 0;
    int64_t batch_index_ = 0;
};

struct PrepOptions {
    std::string input;
    EventFormat format = EventFormat::csv_session;
    int64_t min_session_len = 2;
    int64_t min_item_freq = 5;
    int64_t top_k_items = 0;
    SplitRule split;
    int64_t gap_seconds = 0; // > 0 enables gap sessionization (format B corpora)
    double validation_fraction = 0.2;
};

// load -> (sessionize) -> filter -> split -> per-side augmentation, with the
// validation slice frozen from the temporally last train examples.
SessionDataset prep_dataset(const PrepOptions& opt);

// Prepared-dataset cache container (versioned, hash-checked, byte-stable).
void save_cache(const SessionDataset& ds, const std::string& path);
SessionDataset load_cache(const std::string& path);

} // namespace attnmix::data
