// Command-line front end. Talks to the core exclusively through the C API in
// attnmix.h; JSON is only used here to assemble overrides and read results.

#include "attnmix.h"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct OwnedString {
    char* ptr = nullptr;
    ~OwnedString() { am_string_free(ptr); }
    std::string str() const { return ptr ? ptr : ""; }
};

[[noreturn]] void die(am_status st, const std::string& context) {
    std::cerr << "error (" << am_status_name(st) << "): " << context;
    const char* detail = am_last_error();
    if (detail && *detail) std::cerr << ": " << detail;
    std::cerr << "\n";
    std::exit(static_cast<int>(st));
}

void check(am_status st, const std::string& context) {
    if (st != AM_OK) die(st, context);
}

std::string read_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) die(AM_ERR_IO, "cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) die(AM_ERR_IO, "cannot write " + path);
    f << text;
}

struct GlobalArgs {
    std::string config_path;
    std::optional<long long> seed;
    std::string out_dir;

    std::string resolve_config(const json& extra_overrides) const {
        std::string file_text;
        if (!config_path.empty()) file_text = read_file(config_path);
        json overrides = extra_overrides;
        if (seed) overrides["train"]["seed"] = *seed;
        std::string over_text = overrides.empty() ? "" : overrides.dump();
        OwnedString effective;
        am_status st = am_config_resolve(config_path.empty() ? nullptr : file_text.c_str(),
                                         over_text.empty() ? nullptr : over_text.c_str(),
                                         &effective.ptr);
        check(st, "resolving configuration");
        return effective.str();
    }

    std::string out(const std::string& name) const {
        fs::create_directories(out_dir);
        return (fs::path(out_dir) / name).string();
    }
};

std::vector<long long> parse_grid(const std::string& csv, const std::string& what) {
    std::vector<long long> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        try {
            out.push_back(std::stoll(tok));
        } catch (const std::exception&) {
            die(AM_ERR_INVALID_ARGUMENT, "bad " + what + " grid entry '" + tok + "'");
        }
    }
    if (out.empty()) die(AM_ERR_INVALID_ARGUMENT, what + " grid is empty");
    return out;
}

struct SweepRow {
    long long levels = 0, heads = 0;
    double hr20 = 0.0, mrr20 = 0.0, seconds = 0.0;
    bool ok = false;
    std::string error;
};

void write_sweep_outputs(const std::string& dir, const std::vector<SweepRow>& rows) {
    std::string table = "L\tH\thr20\tmrr20\tseconds\tstatus\n";
    char buf[160];
    for (const SweepRow& r : rows) {
        if (r.ok)
            std::snprintf(buf, sizeof buf, "%lld\t%lld\t%.6f\t%.6f\t%.3f\tok\n", r.levels, r.heads,
                          r.hr20, r.mrr20, r.seconds);
        else
            std::snprintf(buf, sizeof buf, "%lld\t%lld\t-\t-\t-\tfailed:%s\n", r.levels, r.heads,
                          r.error.c_str());
        table += buf;
    }
    write_file((fs::path(dir) / "sweep.tsv").string(), table);

    // one HR@20-vs-L series per head count, and vice versa
    std::set<long long> hs, ls;
    for (const SweepRow& r : rows)
        if (r.ok) {
            hs.insert(r.heads);
            ls.insert(r.levels);
        }
    for (long long h : hs) {
        std::string series = "L\thr20\n";
        for (const SweepRow& r : rows)
            if (r.ok && r.heads == h) {
                std::snprintf(buf, sizeof buf, "%lld\t%.6f\n", r.levels, r.hr20);
                series += buf;
            }
        write_file((fs::path(dir) / ("series_hr20_vs_L_H" + std::to_string(h) + ".tsv")).string(),
                   series);
    }
    for (long long l : ls) {
        std::string series = "H\thr20\n";
        for (const SweepRow& r : rows)
            if (r.ok && r.levels == l) {
                std::snprintf(buf, sizeof buf, "%lld\t%.6f\n", r.heads, r.hr20);
                series += buf;
            }
        write_file((fs::path(dir) / ("series_hr20_vs_H_L" + std::to_string(l) + ".tsv")).string(),
                   series);
    }
    std::cout << table;
}

void emit_plot_data_from_dir(const std::string& dir) {
    std::string path = (fs::path(dir) / "sweep.tsv").string();
    std::ifstream f(path);
    if (!f) die(AM_ERR_IO, "no sweep.tsv in " + dir);
    std::vector<SweepRow> rows;
    std::string line;
    std::getline(f, line); // header
    while (std::getline(f, line)) {
        SweepRow r;
        char status[64] = {0};
        if (std::sscanf(line.c_str(), "%lld\t%lld\t%lf\t%lf\t%lf\t%63s", &r.levels, &r.heads, &r.hr20,
                        &r.mrr20, &r.seconds, status) == 6 &&
            std::string(status) == "ok") {
            r.ok = true;
            rows.push_back(r);
        }
    }
    write_sweep_outputs(dir, rows);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"session-based recommender with a multi-level attention-mixture readout"};
    app.require_subcommand(1);

    GlobalArgs g;
    const char* env_out = std::getenv("ATTNMIX_OUT");
    g.out_dir = env_out && *env_out ? env_out : ".";
    app.add_option("--config", g.config_path, "JSON config file");
    app.add_option("--seed", g.seed, "override train.seed");
    app.add_option("--out", g.out_dir, "output directory (default $ATTNMIX_OUT or .)");

    // prep
    auto* prep = app.add_subcommand("prep", "build the dataset cache from raw events");
    std::string prep_input, prep_cache;
    prep->add_option("--input", prep_input, "raw event file (overrides data.input)");
    prep->add_option("--cache", prep_cache, "cache output path (default <out>/dataset.amx)");

    // train
    auto* tr = app.add_subcommand("train", "train and write the best checkpoint");
    std::string tr_cache, tr_ckpt, tr_variant;
    std::optional<long long> tr_levels, tr_heads, tr_epochs, tr_batch;
    std::optional<double> tr_lr;
    tr->add_option("--cache", tr_cache, "dataset cache (default <out>/dataset.amx)");
    tr->add_option("--checkpoint", tr_ckpt, "checkpoint output (default <out>/checkpoint.amx)");
    tr->add_option("--variant", tr_variant, "model variant: full|M|IP|LI|LP");
    tr->add_option("--levels", tr_levels, "query levels L");
    tr->add_option("--heads", tr_heads, "attention heads H");
    tr->add_option("--epochs", tr_epochs, "max epochs");
    tr->add_option("--batch", tr_batch, "batch size");
    tr->add_option("--lr", tr_lr, "learning rate");

    // eval
    auto* ev = app.add_subcommand("eval", "rank the test split under a checkpoint");
    std::string ev_cache, ev_ckpt, ev_plot_dir;
    ev->add_option("--cache", ev_cache, "dataset cache (default <out>/dataset.amx)");
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint (default <out>/checkpoint.amx)");
    ev->add_option("--emit-plot-data", ev_plot_dir,
                   "regenerate HR@20 series files from a sweep directory");

    // recommend
    auto* rec = app.add_subcommand("recommend", "top-k next items for sessions of external ids");
    std::string rec_cache, rec_ckpt, rec_items;
    long long rec_topk = 20;
    rec->add_option("--cache", rec_cache, "dataset cache (default <out>/dataset.amx)");
    rec->add_option("--checkpoint", rec_ckpt, "checkpoint (default <out>/checkpoint.amx)");
    rec->add_option("--topk", rec_topk, "list length (default 20)");
    rec->add_option("--items", rec_items, "one session inline; otherwise one session per stdin line");

    // sweep
    auto* sw = app.add_subcommand("sweep", "train/eval a grid over L and H with a shared seed");
    std::string sw_cache, sw_levels = "1,2,3", sw_heads = "1";
    sw->add_option("--cache", sw_cache, "dataset cache (default <out>/dataset.amx)");
    sw->add_option("--levels", sw_levels, "comma-separated L grid (default 1,2,3)");
    sw->add_option("--heads", sw_heads, "comma-separated H grid (default 1)");

    // probe
    auto* pb = app.add_subcommand("probe", "sparsity probe over the readout weights");
    std::string pb_cache, pb_out;
    std::optional<double> pb_lambda;
    pb->add_option("--cache", pb_cache, "dataset cache (default <out>/dataset.amx)");
    pb->add_option("--lambda", pb_lambda, "KL coefficient (overrides probe.lambda)");
    pb->add_option("--series", pb_out, "series output path (default <out>/probe.txt)");

    CLI11_PARSE(app, argc, argv);

    auto default_cache = [&g](std::string& path) {
        if (path.empty()) path = g.out("dataset.amx");
    };
    auto default_ckpt = [&g](std::string& path) {
        if (path.empty()) path = g.out("checkpoint.amx");
    };

    if (prep->parsed()) {
        json over;
        if (!prep_input.empty()) over["data"]["input"] = prep_input;
        std::string cfg = g.resolve_config(over);
        default_cache(prep_cache);
        OwnedString summary;
        check(am_prep(cfg.c_str(), prep_cache.c_str(), &summary.ptr), "prep");
        std::cout << summary.str() << "\n";
        return 0;
    }

    if (tr->parsed()) {
        json over;
        if (!tr_variant.empty()) over["model"]["variant"] = tr_variant;
        if (tr_levels) over["model"]["levels"] = *tr_levels;
        if (tr_heads) over["model"]["heads"] = *tr_heads;
        if (tr_epochs) over["train"]["max_epochs"] = *tr_epochs;
        if (tr_batch) over["train"]["batch_size"] = *tr_batch;
        if (tr_lr) over["train"]["lr"] = *tr_lr;
        std::string cfg = g.resolve_config(over);
        default_cache(tr_cache);
        default_ckpt(tr_ckpt);
        am_dataset* ds = nullptr;
        check(am_dataset_open(tr_cache.c_str(), &ds), "opening " + tr_cache);
        OwnedString result;
        am_status st = am_train(ds, cfg.c_str(), tr_ckpt.c_str(), g.out("train_log.txt").c_str(),
                                &result.ptr);
        am_dataset_close(ds);
        check(st, "train");
        std::cout << result.str() << "\n";
        return 0;
    }

    if (ev->parsed()) {
        if (!ev_plot_dir.empty()) {
            emit_plot_data_from_dir(ev_plot_dir);
            return 0;
        }
        std::string cfg = g.resolve_config({});
        default_cache(ev_cache);
        default_ckpt(ev_ckpt);
        am_dataset* ds = nullptr;
        check(am_dataset_open(ev_cache.c_str(), &ds), "opening " + ev_cache);
        am_model* m = nullptr;
        am_status st = am_model_open(ev_ckpt.c_str(), &m);
        if (st != AM_OK) {
            am_dataset_close(ds);
            die(st, "opening " + ev_ckpt);
        }
        OwnedString report;
        st = am_evaluate(m, ds, cfg.c_str(), &report.ptr);
        am_model_close(m);
        am_dataset_close(ds);
        check(st, "eval");
        json j = json::parse(report.str());
        write_file(g.out("report.json"), report.str());
        if (j.contains("table")) write_file(g.out("report.tsv"), j["table"].get<std::string>());
        std::cout << report.str() << "\n";
        return 0;
    }

    if (rec->parsed()) {
        default_cache(rec_cache);
        default_ckpt(rec_ckpt);
        am_dataset* ds = nullptr;
        check(am_dataset_open(rec_cache.c_str(), &ds), "opening " + rec_cache);
        am_model* m = nullptr;
        am_status st = am_model_open(rec_ckpt.c_str(), &m);
        if (st != AM_OK) {
            am_dataset_close(ds);
            die(st, "opening " + rec_ckpt);
        }
        auto run_session = [&](const std::string& line) {
            std::stringstream ss(line);
            std::vector<std::string> ids;
            std::string tok;
            while (ss >> tok) ids.push_back(tok);
            if (ids.empty()) return;
            std::vector<const char*> ptrs;
            for (const std::string& s : ids) ptrs.push_back(s.c_str());
            OwnedString out;
            am_status rst = am_recommend(m, ds, ptrs.data(), ptrs.size(),
                                         static_cast<size_t>(rec_topk), &out.ptr);
            if (rst != AM_OK) {
                am_model_close(m);
                am_dataset_close(ds);
                die(rst, "recommend");
            }
            std::cout << out.str() << "\n";
        };
        if (!rec_items.empty()) {
            run_session(rec_items);
        } else {
            std::string line;
            while (std::getline(std::cin, line)) run_session(line);
        }
        am_model_close(m);
        am_dataset_close(ds);
        return 0;
    }

    if (sw->parsed()) {
        default_cache(sw_cache);
        std::vector<long long> levels = parse_grid(sw_levels, "levels");
        std::vector<long long> heads = parse_grid(sw_heads, "heads");
        am_dataset* ds = nullptr;
        check(am_dataset_open(sw_cache.c_str(), &ds), "opening " + sw_cache);
        std::vector<SweepRow> rows;
        for (long long L : levels)
            for (long long H : heads) {
                SweepRow row;
                row.levels = L;
                row.heads = H;
                json over;
                over["model"]["levels"] = L;
                over["model"]["heads"] = H;
                std::string cfg;
                try {
                    cfg = g.resolve_config(over);
                } catch (...) {
                    row.error = "config";
                    rows.push_back(row);
                    continue;
                }
                std::string tag = "L" + std::to_string(L) + "_H" + std::to_string(H);
                OwnedString result;
                am_status st = am_train(ds, cfg.c_str(), g.out("sweep_" + tag + ".amx").c_str(),
                                        nullptr, &result.ptr);
                if (st != AM_OK) {
                    row.error = am_status_name(st);
                    rows.push_back(row);
                    continue;
                }
                am_model* m = nullptr;
                st = am_model_open(g.out("sweep_" + tag + ".amx").c_str(), &m);
                if (st != AM_OK) {
                    row.error = am_status_name(st);
                    rows.push_back(row);
                    continue;
                }
                OwnedString report;
                st = am_evaluate(m, ds, cfg.c_str(), &report.ptr);
                am_model_close(m);
                if (st != AM_OK) {
                    row.error = am_status_name(st);
                    rows.push_back(row);
                    continue;
                }
                json j = json::parse(report.str());
                if (!j["cutoffs"].contains("20")) {
                    row.error = "no-hr20-cutoff";
                    rows.push_back(row);
                    continue;
                }
                row.hr20 = j["cutoffs"]["20"]["hr"].get<double>();
                row.mrr20 = j["cutoffs"]["20"]["mrr"].get<double>();
                row.seconds = j["seconds"].get<double>();
                row.ok = true;
                rows.push_back(row);
            }
        am_dataset_close(ds);
        fs::create_directories(g.out_dir);
        write_file(g.out("sweep_config.json"), g.resolve_config({}));
        write_sweep_outputs(g.out_dir, rows);
        return 0;
    }

    if (pb->parsed()) {
        json over;
        if (pb_lambda) over["probe"]["lambda"] = *pb_lambda;
        std::string cfg = g.resolve_config(over);
        default_cache(pb_cache);
        if (pb_out.empty()) pb_out = g.out("probe.txt");
        am_dataset* ds = nullptr;
        check(am_dataset_open(pb_cache.c_str(), &ds), "opening " + pb_cache);
        OwnedString series;
        am_status st = am_probe(ds, cfg.c_str(), &series.ptr);
        am_dataset_close(ds);
        check(st, "probe");
        write_file(pb_out, series.str());
        std::cout << series.str();
        return 0;
    }

    return 0;
}
