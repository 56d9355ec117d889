#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#ifndef ATTNMIX_CLI_PATH
#error "ATTNMIX_CLI_PATH must be defined"
#endif

namespace fs = std::filesystem;

namespace {

struct CliResult {
    int status = -1;
    std::string out;
};

CliResult run_cli(const std::string& args, const std::string& stdin_file = "") {
    fs::path dir = fs::temp_directory_path() / "amx_cli";
    fs::create_directories(dir);
    fs::path out_file = dir / "last_stdout.txt";
    std::string cmd = std::string(ATTNMIX_CLI_PATH) + " " + args;
    if (!stdin_file.empty()) cmd += " < " + stdin_file;
    cmd += " > " + out_file.string() + " 2> " + (dir / "last_stderr.txt").string();
    int rc = std::system(cmd.c_str());
    CliResult r;
    r.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    std::ifstream f(out_file);
    std::ostringstream ss;
    ss << f.rdbuf();
    r.out = ss.str();
    return r;
}

std::string work_dir() {
    fs::path dir = fs::temp_directory_path() / "amx_cli" / "work";
    fs::create_directories(dir);
    return dir.string();
}

std::string make_corpus() {
    fs::path p = fs::temp_directory_path() / "amx_cli" / "corpus.csv";
    fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::trunc);
    f << "session_id,item_id,timestamp\n";
    int ts = 5000;
    for (int s = 0; s < 40; ++s) {
        int start = s % 7;
        for (int k = 0; k < 4; ++k) {
            f << "s" << s << ",i" << (start + k) % 7 << "," << ts << "\n";
            ts += 10;
        }
    }
    return p.string();
}

std::string make_config() {
    fs::path p = fs::temp_directory_path() / "amx_cli" / "config.json";
    std::ofstream f(p, std::ios::trunc);
    f << "{\"data\":{\"min_item_freq\":1},"
      << "\"model\":{\"d\":8,\"levels\":2,\"heads\":1},"
      << "\"train\":{\"lr\":0.01,\"batch_size\":32,\"max_epochs\":3,\"patience\":3,\"seed\":3}}";
    return p.string();
}

std::vector<unsigned char> slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return std::vector<unsigned char>((std::istreambuf_iterator<char>(f)),
                                      std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("cli pipeline: prep determinism, train, eval, recommend, probe, sweep") {
    std::string corpus = make_corpus();
    std::string config = make_config();
    std::string out = work_dir();
    std::string base = "--config " + config + " --out " + out + " ";

    // prep twice: byte-identical caches
    CliResult r = run_cli(base + "prep --input " + corpus);
    REQUIRE(r.status == 0);
    CHECK(r.out.find("\"clicks\"") != std::string::npos);
    auto cache1 = slurp(out + "/dataset.amx");
    r = run_cli(base + "prep --input " + corpus);
    REQUIRE(r.status == 0);
    auto cache2 = slurp(out + "/dataset.amx");
    CHECK(cache1 == cache2);

    // missing input fails with a nonzero status
    r = run_cli(base + "prep --input /no/such/file.csv");
    CHECK(r.status != 0);

    // train with an explicit variant; checkpoint must record it
    r = run_cli(base + "train --variant M");
    REQUIRE(r.status == 0);
    CHECK(r.out.find("\"best_epoch\"") != std::string::npos);
    CHECK(fs::exists(out + "/checkpoint.amx"));
    CHECK(fs::exists(out + "/train_log.txt"));

    // deterministic retrain: same checkpoint bytes with the same seed
    auto ck1 = slurp(out + "/checkpoint.amx");
    r = run_cli(base + "train --variant M");
    REQUIRE(r.status == 0);
    auto ck2 = slurp(out + "/checkpoint.amx");
    CHECK(ck1 == ck2);

    // eval emits the report files and the variant metadata survives
    r = run_cli(base + "eval");
    REQUIRE(r.status == 0);
    CHECK(fs::exists(out + "/report.json"));
    CHECK(fs::exists(out + "/report.tsv"));
    CHECK(r.out.find("\"cutoffs\"") != std::string::npos);

    // recommend: inline session and stdin batch mode
    r = run_cli(base + "recommend --topk 3 --items \"i0 i1\"");
    REQUIRE(r.status == 0);
    CHECK(r.out.find("\"item\"") != std::string::npos);

    fs::path sessions = fs::temp_directory_path() / "amx_cli" / "sessions.txt";
    std::ofstream(sessions, std::ios::trunc) << "i0 i1\ni2 i3 i4\n";
    r = run_cli(base + "recommend --topk 2", sessions.string());
    REQUIRE(r.status == 0);
    int lines = 0;
    for (char c : r.out)
        if (c == '\n') ++lines;
    CHECK(lines == 2);

    // unknown item id fails and names the offender
    r = run_cli(base + "recommend --topk 2 --items \"i0 zz9\"");
    CHECK(r.status != 0);

    // probe control run
    r = run_cli(base + "probe --lambda 0");
    REQUIRE(r.status == 0);
    CHECK(fs::exists(out + "/probe.txt"));
    CHECK(r.out.find("epoch=0") != std::string::npos);
    CHECK(r.out.find("rho=") != std::string::npos);

    // one-point sweep emits the table and series files
    r = run_cli(base + "sweep --levels 1,2 --heads 1");
    REQUIRE(r.status == 0);
    CHECK(fs::exists(out + "/sweep.tsv"));
    CHECK(fs::exists(out + "/series_hr20_vs_L_H1.tsv"));
    {
        std::ifstream f(out + "/sweep.tsv");
        std::string line;
        int rows = 0;
        while (std::getline(f, line)) ++rows;
        CHECK(rows == 3); // header + 2 grid points
    }

    // regenerate plot data from the sweep directory
    r = run_cli("--config " + config + " eval --emit-plot-data " + out);
    REQUIRE(r.status == 0);
    CHECK(fs::exists(out + "/series_hr20_vs_H_L1.tsv"));
}

TEST_CASE("cli honors the ATTNMIX_OUT environment default") {
    std::string corpus = make_corpus();
    std::string config = make_config();
    fs::path envdir = fs::temp_directory_path() / "amx_cli" / "envout";
    fs::create_directories(envdir);
    std::string cmd = "ATTNMIX_OUT=" + envdir.string() + " " + std::string(ATTNMIX_CLI_PATH) +
                      " --config " + config + " prep --input " + corpus + " > /dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(rc));
    CHECK(WEXITSTATUS(rc) == 0);
    CHECK(fs::exists(envdir / "dataset.amx"));
}
