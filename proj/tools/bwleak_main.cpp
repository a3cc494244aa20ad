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


#include <bwleak/csv.hpp>
#include <bwleak/error.hpp>
#include <bwleak/experiment.hpp>

#include <CLI11.hpp>

#include <cstdint>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

int main(int argc, char** argv) {
    CLI::App app{"Bandwidth side-channel experiments on a simulated NPU"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::string models;
    app.add_option("--config", config_path, "Experiment config file (key = value lines)")
        ->check(CLI::ExistingFile);
    app.add_option("--out", out_dir, "Output directory (overrides output_dir)");
    app.add_option("--seed", seed, "Victim run seed (overrides seed)");
    app.add_option("--models", models, "Comma-separated model names (overrides models)");

    using Command = std::function<bwleak::CommandResult(const bwleak::ExperimentConfig&)>;
    const std::map<std::string, std::pair<std::string, Command>> commands{
        {"simulate", {"Simulate victim inferences and write traces with true spans", bwleak::cmd_simulate}},
        {"tune", {"Tune tile configs and sample random schedules", bwleak::cmd_tune}},
        {"attack", {"Detect layer boundaries and classify layer types", bwleak::cmd_attack}},
        {"defend", {"Sweep traffic shaping targets and rerun the attack", bwleak::cmd_defend}},
        {"report", {"Collect the text reports into summary.txt", bwleak::cmd_report}},
        {"all", {"Run simulate, tune, attack, defend and report in order", [](const auto& cfg) {
             bwleak::CommandResult total;
             for (auto* step : {bwleak::cmd_simulate, bwleak::cmd_tune, bwleak::cmd_attack,
                                bwleak::cmd_defend, bwleak::cmd_report}) {
                 auto r = step(cfg);
                 total.written.insert(total.written.end(), r.written.begin(), r.written.end());
                 total.failures.insert(total.failures.end(), r.failures.begin(), r.failures.end());
             }
             return total;
         }}},
    };
    for (const auto& [name, entry] : commands) app.add_subcommand(name, entry.first)->fallthrough();

    CLI11_PARSE(app, argc, argv);

    try {
        bwleak::ExperimentConfig cfg;
        if (!config_path.empty()) cfg = bwleak::load_config(config_path);
        if (!out_dir.empty()) cfg.output_dir = out_dir;
        if (seed) cfg.seed = *seed;
        if (!models.empty()) {
            cfg.models.clear();
            for (auto& m : bwleak::split(models, ','))
                if (!m.empty()) cfg.models.push_back(m);
        }
        const std::string name = app.get_subcommands().front()->get_name();
        const bwleak::CommandResult res = commands.at(name).second(cfg);
        for (const auto& p : res.written) std::cout << "wrote " << p.string() << '\n';
        for (const auto& f : res.failures) std::cerr << "bwleak " << name << ": failed: " << f << '\n';
        return res.ok() ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "bwleak: " << e.what() << '\n';
        return 2;
    }
}
