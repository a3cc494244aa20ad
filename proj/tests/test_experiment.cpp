/*
 * Copyright 2026 The bwleak Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#include <bwleak/error.hpp>
#include <bwleak/experiment.hpp>

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

using namespace bwleak;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::path(BWLEAK_TEST_TMP) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t count_lines(const fs::path& p) {
    const auto s = slurp(p);
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

ExperimentConfig parse(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in, "test.cfg");
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("config text round trips") {
    ExperimentConfig c = parse("# comment\nmodels = alexnet, vgg11\nseed = 42\n"
                               "shaper.targets = 1, 0.5, mean\nnpu.clock_hz = 2e8\n");
    CHECK(c.models == std::vector<std::string>{"alexnet", "vgg11"});
    CHECK(c.seed == 42);
    REQUIRE(c.shaper_targets.size() == 3);
    CHECK(c.shaper_targets[2].mean);
    CHECK(c.shaper_targets[1].label() == "0.5xpeak");
    CHECK(c.npu.clock_hz == 2e8);
    std::ostringstream a;
    write_config(a, c);
    std::ostringstream b;
    write_config(b, parse(a.str()));
    CHECK(a.str() == b.str());
}

TEST_CASE("config errors name the line") {
    try {
        parse("seed = 1\nbogus.key = 3\n");
        FAIL("no error");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("test.cfg:2") != std::string::npos);
        CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(parse("seed 1\n"), ParseError);
    CHECK_THROWS_AS(parse("seed = minus one\n"), ParseError);
    auto c = parse("models = alexnet, foonet\n");
    try {
        c.validate();
        FAIL("no error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("unknown model 'foonet'") != std::string::npos);
    }
    CHECK_THROWS_AS(parse("classifier.test_fraction = 1.5\n").validate(), Error);
}

TEST_CASE("simulate writes every model and reruns are identical") {
    ExperimentConfig c;
    c.output_dir = scratch("sim_a");
    const auto r = cmd_simulate(c);
    REQUIRE(r.ok());
    for (const auto& m : c.model_names()) {
        CHECK(fs::exists(c.output_dir / "traces" / (m + ".csv")));
        CHECK(fs::exists(c.output_dir / "traces" / (m + "_spans.csv")));
    }
    CHECK(fs::exists(c.output_dir / "config.txt"));
    ExperimentConfig d = c;
    d.output_dir = scratch("sim_b");
    REQUIRE(cmd_simulate(d).ok());
    for (const auto& m : c.model_names())
        CHECK(slurp(c.output_dir / "traces" / (m + ".csv")) ==
              slurp(d.output_dir / "traces" / (m + ".csv")));
}

TEST_CASE("tune draws the configured number of samples") {
    ExperimentConfig c;
    c.models = {"alexnet", "resnet18"};
    c.tune_samples = 17;
    c.output_dir = scratch("tune");
    REQUIRE(cmd_tune(c).ok());
    for (const auto& m : c.models) CHECK(count_lines(c.output_dir / "tune" / (m + "_ratios.dat")) == 18);
    CHECK(fs::exists(c.output_dir / "tune_report.txt"));
    CHECK(count_lines(c.output_dir / "tune_report.csv") == 3);
}

TEST_CASE("attack needs traces and then reports both tables") {
    ExperimentConfig c;
    c.models = {"alexnet"};
    c.output_dir = scratch("attack");
    c.runs_per_class = 6;
    c.svm_epochs = 10;
    c.net_epochs = 10;
    const auto missing = cmd_attack(c);
    REQUIRE_FALSE(missing.ok());
    CHECK(missing.failures.front().find("run simulate first") != std::string::npos);
    REQUIRE(cmd_simulate(c).ok());
    REQUIRE(cmd_attack(c).ok());
    const auto boundary = slurp(c.output_dir / "boundary_report.csv");
    CHECK(boundary.find("alexnet,") != std::string::npos);
    CHECK(boundary.find("overall,") != std::string::npos);
    const auto acc = slurp(c.output_dir / "accuracy_report.txt");
    CHECK(acc.find("Time only") != std::string::npos);
    CHECK(fs::exists(c.output_dir / "classifiers" / "alexnet_svm_w_dwt.txt"));
    CHECK(fs::exists(c.output_dir / "classifiers" / "alexnet_time_only.txt"));
}

TEST_CASE("defend hides boundaries at half the peak") {
    ExperimentConfig c;
    c.models = {"alexnet"};
    c.output_dir = scratch("defend");
    c.shaper_targets = {SweepTarget{false, 1.0}, SweepTarget{false, 0.5}};
    REQUIRE(cmd_defend(c).ok());
    const auto csv = slurp(c.output_dir / "defend_report.csv");
    std::istringstream lines(csv);
    std::string header, full, half;
    std::getline(lines, header);
    std::getline(lines, full);
    std::getline(lines, half);
    CHECK(full.find("alexnet,1xpeak,") == 0);
    CHECK(half.find("alexnet,0.5xpeak,") == 0);
    CHECK(half.find(",ok,") != std::string::npos);
    CHECK(half.substr(half.size() - 8) == "NA,NA,NA");
    CHECK(fs::exists(c.output_dir / "defend" / "alexnet_0.5xpeak.csv"));
    REQUIRE(cmd_report(c).ok());
    CHECK(slurp(c.output_dir / "summary.txt").find(slurp(c.output_dir / "defend_report.txt")) !=
          std::string::npos);
}

}  // TEST_SUITE
