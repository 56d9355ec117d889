#include "data/dataset.hpp"

#include "common/binio.hpp"
#include "common/error.hpp"
#include "common/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace attnmix::data {

namespace {

// numeric-aware comparison so "9" < "30000" when both ids are integers
bool id_less(const std::string& a, const std::string& b) {
    auto numeric = [](const std::string& s) {
        if (s.empty()) return false;
        for (char c : s)
            if (c < '0' || c > '9') return false;
        return true;
    };
    if (numeric(a) && numeric(b)) {
        if (a.size() != b.size()) return a.size() < b.size();
        return a < b;
    }
    return a < b;
}

} // namespace

void Vocabulary::rebuild_index() {
    index_.clear();
    index_.reserve(ids.size());
    for (size_t i = 1; i < ids.size(); ++i)
        index_.emplace_back(ids[i], static_cast<int32_t>(i));
    std::sort(index_.begin(), index_.end());
}

int32_t Vocabulary::lookup(const std::string& id) const {
    auto it = std::lower_bound(index_.begin(), index_.end(), id,
                               [](const auto& p, const std::string& s) { return p.first < s; });
    if (it == index_.end() || it->first != id) return 0;
    return it->second;
}

uint64_t Vocabulary::content_hash() const {
    uint64_t h = io::kFnvOffset;
    for (size_t i = 1; i < ids.size(); ++i) {
        h = io::fnv1a_str(ids[i], h);
        uint8_t sep = 0x1F;
        h = io::fnv1a(std::span<const uint8_t>(&sep, 1), h);
    }
    return h;
}

SplitRule SplitRule::parse(const std::string& token, double fraction) {
    SplitRule r;
    if (token == "last-week") {
        r.kind = Kind::last_week;
    } else if (token == "last-fraction") {
        r.kind = Kind::last_fraction;
        if (!(fraction > 0.0 && fraction < 1.0))
            raise(Errc::invalid_rule, "split fraction must lie in (0,1)");
        r.fraction = fraction;
    } else {
        raise(Errc::invalid_rule, "unknown split rule '" + token + "' (expected last-week|last-fraction)");
    }
    return r;
}

std::string SplitRule::describe() const {
    if (kind == Kind::last_week) return "last-week";
    return "last-fraction(" + std::to_string(fraction) + ")";
}

std::pair<std::vector<Session>, Vocabulary> filter_and_index(const std::vector<RawSession>& raw,
                                                             int64_t min_session_len,
                                                             int64_t min_item_freq,
                                                             int64_t top_k_items) {
    if (min_session_len < 0 || min_item_freq < 0 || top_k_items < 0)
        raise(Errc::invalid_argument, "filter thresholds must be nonnegative");

    std::vector<std::vector<std::string>> sessions;
    std::vector<size_t> origin;
    sessions.reserve(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) {
        std::vector<std::string> items;
        items.reserve(raw[i].events.size());
        for (const RawEvent& e : raw[i].events) items.push_back(e.item);
        sessions.push_back(std::move(items));
        origin.push_back(i);
    }

    bool changed = true;
    while (changed) {
        changed = false;
        std::map<std::string, int64_t> freq;
        for (const auto& s : sessions)
            for (const auto& it : s) ++freq[it];

        std::unordered_set<std::string> keep;
        if (top_k_items > 0) {
            std::vector<std::pair<std::string, int64_t>> ranked(freq.begin(), freq.end());
            std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
                if (a.second != b.second) return a.second > b.second;
                return id_less(a.first, b.first);
            });
            size_t k = std::min<size_t>(ranked.size(), static_cast<size_t>(top_k_items));
            for (size_t i = 0; i < k; ++i)
                if (ranked[i].second >= min_item_freq) keep.insert(ranked[i].first);
        } else {
            for (const auto& [id, f] : freq)
                if (f >= min_item_freq) keep.insert(id);
        }

        std::vector<std::vector<std::string>> next;
        std::vector<size_t> next_origin;
        next.reserve(sessions.size());
        for (size_t i = 0; i < sessions.size(); ++i) {
            std::vector<std::string> filtered;
            filtered.reserve(sessions[i].size());
            for (const auto& it : sessions[i])
                if (keep.count(it)) filtered.push_back(it);
            if (filtered.size() != sessions[i].size()) changed = true;
            if (static_cast<int64_t>(filtered.size()) >= min_session_len && !filtered.empty()) {
                next.push_back(std::move(filtered));
                next_origin.push_back(origin[i]);
            } else {
                changed = true;
            }
        }
        sessions = std::move(next);
        origin = std::move(next_origin);
        if (sessions.empty()) raise(Errc::empty_after_filter, "no sessions survive the filter");
    }

    Vocabulary vocab;
    vocab.ids.push_back(""); // padding slot
    vocab.freq.push_back(0);
    std::unordered_map<std::string, int32_t> index;
    std::vector<Session> out;
    out.reserve(sessions.size());
    for (size_t i = 0; i < sessions.size(); ++i) {
        Session s;
        s.id = raw[origin[i]].key;
        // end timestamp of the last surviving event
        const RawSession& src = raw[origin[i]];
        std::unordered_map<std::string, int> remaining;
        for (const auto& it : sessions[i]) ++remaining[it];
        int64_t last_ts = src.events.front().timestamp;
        size_t matched = 0;
        for (const RawEvent& e : src.events) {
            auto it = remaining.find(e.item);
            if (it != remaining.end() && it->second > 0) {
                --it->second;
                last_ts = e.timestamp;
                if (++matched == sessions[i].size()) break;
            }
        }
        s.end_ts = last_ts;
        for (const auto& item : sessions[i]) {
            auto [pos, inserted] = index.emplace(item, static_cast<int32_t>(vocab.ids.size()));
            if (inserted) {
                vocab.ids.push_back(item);
                vocab.freq.push_back(0);
            }
            ++vocab.freq[static_cast<size_t>(pos->second)];
            s.items.push_back(pos->second);
        }
        out.push_back(std::move(s));
    }
    if (vocab.items() == 0) raise(Errc::empty_after_filter, "no items survive the filter");
    vocab.rebuild_index();
    return {std::move(out), std::move(vocab)};
}

std::vector<TrainingExample> augment(const std::vector<Session>& sessions) {
    std::vector<TrainingExample> out;
    for (const Session& s : sessions) {
        if (s.items.size() < 2)
            raise(Errc::invalid_argument, "augment requires sessions of length >= 2 (session " + s.id + ")");
        for (size_t k = 1; k < s.items.size(); ++k) {
            TrainingExample ex;
            ex.prefix.assign(s.items.begin(), s.items.begin() + static_cast<ptrdiff_t>(k));
            ex.target = s.items[k];
            out.push_back(std::move(ex));
        }
    }
    return out;
}

std::pair<std::vector<Session>, std::vector<Session>> temporal_split(std::vector<Session> sessions,
                                                                     const SplitRule& rule) {
    if (sessions.empty()) raise(Errc::empty_input, "nothing to split");
    std::stable_sort(sessions.begin(), sessions.end(), [](const Session& a, const Session& b) {
        if (a.end_ts != b.end_ts) return a.end_ts < b.end_ts;
        return a.id < b.id;
    });
    size_t cut; // first test index
    if (rule.kind == SplitRule::Kind::last_week) {
        int64_t horizon = sessions.back().end_ts - 7 * 86400;
        cut = sessions.size();
        while (cut > 0 && sessions[cut - 1].end_ts > horizon) --cut;
    } else {
        size_t k = static_cast<size_t>(std::llround(rule.fraction * static_cast<double>(sessions.size())));
        cut = sessions.size() - std::min(k, sessions.size());
    }
    if (cut == 0 || cut == sessions.size())
        raise(Errc::invalid_rule, "degenerate temporal split: " + rule.describe() + " leaves an empty side");
    std::vector<Session> train(sessions.begin(), sessions.begin() + static_cast<ptrdiff_t>(cut));
    std::vector<Session> test(sessions.begin() + static_cast<ptrdiff_t>(cut), sessions.end());
    return {std::move(train), std::move(test)};
}

BatchIter::BatchIter(const std::vector<TrainingExample>& examples, int64_t batch_size,
                     std::optional<uint64_t> shuffle_seed)
    : examples_(examples), batch_size_(batch_size) {
    if (batch_size_ < 1) raise(Errc::invalid_argument, "batch size must be >= 1");
    reset(shuffle_seed);
}

void BatchIter::reset(std::optional<uint64_t> shuffle_seed) {
    order_.resize(examples_.size());
    for (size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    if (shuffle_seed) {
        Rng rng(*shuffle_seed);
        rng.shuffle(order_);
    }
    pos_ = 0;
    batch_index_ = 0;
}

bool BatchIter::next(Batch& out) {
    if (pos_ >= order_.size()) return false;
    size_t end = std::min(order_.size(), pos_ + static_cast<size_t>(batch_size_));
    int64_t rows = static_cast<int64_t>(end - pos_);
    int64_t width = 0;
    for (size_t i = pos_; i < end; ++i)
        width = std::max<int64_t>(width, static_cast<int64_t>(examples_[order_[i]].prefix.size()));
    out.rows = rows;
    out.width = width;
    out.index = batch_index_++;
    out.items.assign(static_cast<size_t>(rows * width), 0);
    out.mask.assign(static_cast<size_t>(rows * width), 0);
    out.lengths.resize(static_cast<size_t>(rows));
    out.targets.resize(static_cast<size_t>(rows));
    for (size_t i = pos_; i < end; ++i) {
        const TrainingExample& ex = examples_[order_[i]];
        int64_t r = static_cast<int64_t>(i - pos_);
        out.lengths[static_cast<size_t>(r)] = static_cast<int32_t>(ex.prefix.size());
        out.targets[static_cast<size_t>(r)] = ex.target;
        for (size_t j = 0; j < ex.prefix.size(); ++j) {
            out.items[static_cast<size_t>(r * width) + j] = ex.prefix[j];
            out.mask[static_cast<size_t>(r * width) + j] = 1;
        }
    }
    pos_ = end;
    return true;
}

SessionDataset prep_dataset(const PrepOptions& opt) {
    std::vector<RawSession> raw = load_events(opt.input, opt.format);

    SessionDataset ds;
    ds.prov.source = opt.input;
    ds.prov.format = format_token(opt.format);
    ds.prov.min_session_len = opt.min_session_len;
    ds.prov.min_item_freq = opt.min_item_freq;
    ds.prov.top_k_items = opt.top_k_items;
    ds.prov.split_rule = opt.split.describe();
    ds.prov.gap_seconds = opt.gap_seconds;
    ds.prov.validation_fraction = opt.validation_fraction;
    ds.prov.raw_streams = static_cast<int64_t>(raw.size());
    for (const RawSession& s : raw) ds.prov.raw_events += static_cast<int64_t>(s.events.size());

    if (opt.gap_seconds > 0) raw = sessionize_by_gap(raw, opt.gap_seconds);

    auto [sessions, vocab] = filter_and_index(raw, opt.min_session_len, opt.min_item_freq, opt.top_k_items);
    ds.vocab = std::move(vocab);
    ds.prov.items = ds.vocab.items();
    ds.prov.sessions = static_cast<int64_t>(sessions.size());
    for (const Session& s : sessions) ds.prov.clicks += static_cast<int64_t>(s.items.size());
    ds.prov.avg_length =
        ds.prov.sessions > 0 ? static_cast<double>(ds.prov.clicks) / static_cast<double>(ds.prov.sessions) : 0.0;

    auto [train_s, test_s] = temporal_split(std::move(sessions), opt.split);

    // items never seen in train cannot be scored meaningfully; drop them from test
    std::unordered_set<int32_t> train_items;
    for (const Session& s : train_s)
        for (int32_t ix : s.items) train_items.insert(ix);
    std::vector<Session> kept_test;
    for (Session& s : test_s) {
        std::vector<int32_t> filtered;
        filtered.reserve(s.items.size());
        for (int32_t ix : s.items) {
            if (train_items.count(ix)) filtered.push_back(ix);
            else ++ds.prov.dropped_test_events;
        }
        if (filtered.size() >= 2) {
            s.items = std::move(filtered);
            kept_test.push_back(std::move(s));
        } else {
            ++ds.prov.dropped_test_sessions;
        }
    }

    // drop sessions too short to augment (possible when min_session_len < 2)
    auto drop_short = [&ds](std::vector<Session>& xs) {
        std::vector<Session> kept;
        kept.reserve(xs.size());
        for (Session& s : xs) {
            if (s.items.size() >= 2) kept.push_back(std::move(s));
            else ++ds.prov.dropped_short_sessions;
        }
        xs = std::move(kept);
    };
    drop_short(train_s);
    drop_short(kept_test);
    if (train_s.empty()) raise(Errc::empty_after_filter, "no train sessions after the split");
    if (kept_test.empty()) raise(Errc::empty_after_filter, "no test sessions after the split");

    ds.prov.train_sessions = static_cast<int64_t>(train_s.size());
    ds.prov.test_sessions = static_cast<int64_t>(kept_test.size());

    std::vector<TrainingExample> train_all = augment(train_s);
    ds.test = augment(kept_test);

    // validation: temporally last slice of the train examples, frozen here
    size_t total = train_all.size();
    size_t val = static_cast<size_t>(std::llround(opt.validation_fraction * static_cast<double>(total)));
    if (total >= 2 && val == 0 && opt.validation_fraction > 0.0) val = 1;
    if (val >= total) val = total - 1;
    ds.train.assign(train_all.begin(), train_all.begin() + static_cast<ptrdiff_t>(total - val));
    ds.validation.assign(train_all.begin() + static_cast<ptrdiff_t>(total - val), train_all.end());
    ds.prov.augmented_examples =
        static_cast<int64_t>(ds.train.size() + ds.validation.size() + ds.test.size());
    return ds;
}

namespace {
constexpr char kCacheMagic[8] = {'A', 'M', 'X', 'D', 'A', 'T', 'A', '1'};
constexpr uint32_t kCacheVersion = 1;

void write_examples(io::Writer& w, const std::vector<TrainingExample>& xs) {
    w.u64(xs.size());
    for (const TrainingExample& ex : xs) {
        w.u32(static_cast<uint32_t>(ex.prefix.size()));
        for (int32_t ix : ex.prefix) w.u32(static_cast<uint32_t>(ix));
        w.u32(static_cast<uint32_t>(ex.target));
    }
}

std::vector<TrainingExample> read_examples(io::Reader& r) {
    uint64_t n = r.u64();
    std::vector<TrainingExample> xs(n);
    for (auto& ex : xs) {
        uint32_t len = r.u32();
        ex.prefix.resize(len);
        for (auto& ix : ex.prefix) ix = static_cast<int32_t>(r.u32());
        ex.target = static_cast<int32_t>(r.u32());
    }
    return xs;
}
} // namespace

void save_cache(const SessionDataset& ds, const std::string& path) {
    io::Writer w;
    w.bytes(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(kCacheMagic), 8));
    w.u32(kCacheVersion);

    const Provenance& p = ds.prov;
    w.str(p.source);
    w.str(p.format);
    w.u64(static_cast<uint64_t>(p.min_session_len));
    w.u64(static_cast<uint64_t>(p.min_item_freq));
    w.u64(static_cast<uint64_t>(p.top_k_items));
    w.str(p.split_rule);
    w.u64(static_cast<uint64_t>(p.gap_seconds));
    w.f64(p.validation_fraction);
    w.u64(static_cast<uint64_t>(p.raw_events));
    w.u64(static_cast<uint64_t>(p.raw_streams));
    w.u64(static_cast<uint64_t>(p.clicks));
    w.u64(static_cast<uint64_t>(p.sessions));
    w.u64(static_cast<uint64_t>(p.items));
    w.f64(p.avg_length);
    w.u64(static_cast<uint64_t>(p.train_sessions));
    w.u64(static_cast<uint64_t>(p.test_sessions));
    w.u64(static_cast<uint64_t>(p.dropped_test_events));
    w.u64(static_cast<uint64_t>(p.dropped_test_sessions));
    w.u64(static_cast<uint64_t>(p.dropped_short_sessions));
    w.u64(static_cast<uint64_t>(p.augmented_examples));
    if (p.config_json.size() > 0xFFFFFF) raise(Errc::invalid_argument, "config echo too large");
    w.u32(static_cast<uint32_t>(p.config_json.size()));
    w.bytes(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(p.config_json.data()),
                                     p.config_json.size()));

    w.u64(static_cast<uint64_t>(ds.vocab.items()));
    for (size_t i = 1; i < ds.vocab.ids.size(); ++i) {
        w.str(ds.vocab.ids[i]);
        w.u64(static_cast<uint64_t>(ds.vocab.freq[i]));
    }
    write_examples(w, ds.train);
    write_examples(w, ds.validation);
    write_examples(w, ds.test);

    uint64_t hash = io::fnv1a(w.buffer());
    w.u64(hash);
    io::write_file(path, w.buffer());
}

SessionDataset load_cache(const std::string& path) {
    std::vector<uint8_t> buf = io::read_file(path);
    if (buf.size() < 20) raise(Errc::corrupt_checkpoint, path + ": not a dataset cache");
    uint64_t stored = 0;
    for (int i = 0; i < 8; ++i) stored |= static_cast<uint64_t>(buf[buf.size() - 8 + i]) << (8 * i);
    uint64_t computed = io::fnv1a(std::span<const uint8_t>(buf.data(), buf.size() - 8));
    if (stored != computed)
        raise(Errc::corrupt_checkpoint, path + ": content hash mismatch");

    io::Reader r(buf);
    std::vector<uint8_t> magic = r.bytes(8);
    if (std::memcmp(magic.data(), kCacheMagic, 8) != 0)
        raise(Errc::corrupt_checkpoint, path + ": bad magic");
    uint32_t version = r.u32();
    if (version != kCacheVersion)
        raise(Errc::version_mismatch,
              path + ": cache version " + std::to_string(version) + ", expected " + std::to_string(kCacheVersion));

    SessionDataset ds;
    Provenance& p = ds.prov;
    p.source = r.str();
    p.format = r.str();
    p.min_session_len = static_cast<int64_t>(r.u64());
    p.min_item_freq = static_cast<int64_t>(r.u64());
    p.top_k_items = static_cast<int64_t>(r.u64());
    p.split_rule = r.str();
    p.gap_seconds = static_cast<int64_t>(r.u64());
    p.validation_fraction = r.f64();
    p.raw_events = static_cast<int64_t>(r.u64());
    p.raw_streams = static_cast<int64_t>(r.u64());
    p.clicks = static_cast<int64_t>(r.u64());
    p.sessions = static_cast<int64_t>(r.u64());
    p.items = static_cast<int64_t>(r.u64());
    p.avg_length = r.f64();
    p.train_sessions = static_cast<int64_t>(r.u64());
    p.test_sessions = static_cast<int64_t>(r.u64());
    p.dropped_test_events = static_cast<int64_t>(r.u64());
    p.dropped_test_sessions = static_cast<int64_t>(r.u64());
    p.dropped_short_sessions = static_cast<int64_t>(r.u64());
    p.augmented_examples = static_cast<int64_t>(r.u64());
    uint32_t cfg_len = r.u32();
    std::vector<uint8_t> cfg = r.bytes(cfg_len);
    p.config_json.assign(cfg.begin(), cfg.end());

    uint64_t items = r.u64();
    ds.vocab.ids.push_back("");
    ds.vocab.freq.push_back(0);
    for (uint64_t i = 0; i < items; ++i) {
        ds.vocab.ids.push_back(r.str());
        ds.vocab.freq.push_back(static_cast<int64_t>(r.u64()));
    }
    ds.vocab.rebuild_index();
    ds.train = read_examples(r);
    ds.validation = read_examples(r);
    ds.test = read_examples(r);
    return ds;
}

} // namespace attnmix::data
