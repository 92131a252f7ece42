#include "bikit/sha256.hpp"
#include "support/helpers.hpp"

#include <doctest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <string>

// Paths injected by the build; the CLI is exercised as a real subprocess.
#ifndef BIKIT_BINARY
#error "BIKIT_BINARY must be defined"
#endif
#ifndef BIKIT_FIXTURES
#error "BIKIT_FIXTURES must be defined"
#endif

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output; // stdout + stderr interleaved
};

RunResult run_cli(const std::string& args) {
    const std::string cmd = std::string(BIKIT_BINARY) + " " + args + " 2>&1";
    RunResult result;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[4096];
    while (std::fgets(buf, sizeof(buf), pipe) != nullptr) result.output += buf;
    const int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

const std::string kFixtures = BIKIT_FIXTURES;

} // namespace

TEST_CASE("cli: usage errors exit 2, help exits 0") {
    CHECK(run_cli("eval --name mcds").exit_code == 2); // --pred missing
    CHECK(run_cli("eval --no-such-flag").exit_code == 2);
    CHECK(run_cli("--help").exit_code == 0);
    const auto help = run_cli("eval --help");
    CHECK(help.exit_code == 0);
    CHECK(help.output.find("--threshold") != std::string::npos);
    CHECK(help.output.find("0.5") != std::string::npos); // defaults listed
    CHECK(run_cli("nosuchcommand").exit_code == 2);
}

TEST_CASE("cli: datasets stats prints the published per-class counts") {
    const auto res = run_cli("--root " + kFixtures + " datasets stats --name mcds");
    CHECK(res.exit_code == 0);
    for (const auto* needle :
         {"Crack                 787", "No Damage             452", "Efflorescence         304",
          "Spalling              422", "Exposed Bars          221", "Rust                  350",
          "Scaling               163", "Other damages         264", "images: 2597",
          "avg classes/image: 1.14"}) {
        CHECK(res.output.find(needle) != std::string::npos);
    }
}

TEST_CASE("cli: machine mode is stable and machine-parsable") {
    const auto a = run_cli("--root " + kFixtures + " --output machine datasets stats --name mcds");
    const auto b = run_cli("--root " + kFixtures + " --output machine datasets stats --name mcds");
    CHECK(a.exit_code == 0);
    CHECK(a.output == b.output); // byte-identical across runs
    CHECK(a.output.find("\"images\":2597") != std::string::npos);

    // Domain errors come out as single-line records with a code.
    const auto err = run_cli("--root " + kFixtures +
                             " --output machine datasets stats --name ghost");
    CHECK(err.exit_code == 1);
    CHECK(err.output.find("\"error\"") != std::string::npos);
    CHECK(err.output.find("\"code\"") != std::string::npos);
}

TEST_CASE("cli: eval scores the stored fixtures to the published values") {
    const auto mcds = run_cli("--root " + kFixtures + " eval --name mcds --split test --pred " +
                              kFixtures + "/datasets/mcds/predictions/hta-mn.csv");
    CHECK(mcds.exit_code == 0);
    CHECK(mcds.output.find("EMR: 0.5444") != std::string::npos);

    const auto codebrim = run_cli("--root " + kFixtures +
                                  " eval --name codebrim --split test --pred " + kFixtures +
                                  "/datasets/codebrim/predictions/hta-rn.csv");
    CHECK(codebrim.exit_code == 0);
    CHECK(codebrim.output.find("EMR: 0.7373") != std::string::npos);
}

TEST_CASE("cli: split make reproduces the shipped split byte for byte") {
    testutil::TempDir tmp;
    const auto out = tmp.file("split.csv").string();
    const auto res = run_cli("--root " + kFixtures +
                             " split make --name mcds --sizes 2057,270,270 --seed 0 --out " + out);
    CHECK(res.exit_code == 0);
    CHECK(testutil::read_file(out) ==
          testutil::read_file(kFixtures + "/datasets/mcds/split.csv"));

    const auto bad = run_cli("--root " + kFixtures +
                             " split make --name mcds --sizes 1,2,3 --seed 0 --out " + out);
    CHECK(bad.exit_code == 1); // size mismatch is a domain error
}

TEST_CASE("cli: hpo run creates a deterministic ledger") {
    testutil::TempDir tmp;
    const auto l1 = tmp.file("l1.jsonl").string();
    const auto l2 = tmp.file("l2.jsonl").string();
    const std::string base = "hpo run --space " + kFixtures +
                             "/spaces/mcds.json --objective synthetic --trials 5 --seed 0";
    CHECK(run_cli(base + " --ledger " + l1).exit_code == 0);
    CHECK(run_cli(base + " --ledger " + l2).exit_code == 0);
    const auto bytes = testutil::read_file(l1);
    CHECK_FALSE(bytes.empty());
    CHECK(bytes == testutil::read_file(l2));
    // Digest frozen from the first verified run of this command.
    CHECK(bikit::sha256_hex(bytes) ==
          "dbef8a66d3d2c4550d2fd1c7db85c37848d2814c7cf6cf61a5fe9ac8dedb3c6d");

    // best replays the ledger without touching it.
    const auto best = run_cli("--output machine hpo best --ledger " + l1);
    CHECK(best.exit_code == 0);
    CHECK(best.output.find("best_val_loss") != std::string::npos);
    CHECK(testutil::read_file(l1) == bytes);
}

TEST_CASE("cli: plan emits a loadable document and exits nonzero on bad input") {
    const auto res = run_cli("--output machine plan --strategy hta --dataset codebrim --model rn");
    CHECK(res.exit_code == 0);
    CHECK(res.output.find("\"schema\":\"bikit-train-plan/1\"") != std::string::npos);
    CHECK(run_cli("plan --strategy hta --dataset nosuch --model rn").exit_code == 1);
    CHECK(run_cli("plan --strategy zz --dataset codebrim --model rn").exit_code == 2);
}
