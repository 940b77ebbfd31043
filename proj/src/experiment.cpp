// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "demoalign/experiment.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "demoalign/error.h"
#include "demoalign/oracle.h"
#include "demoalign/theory.h"

namespace demoalign {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(TaskKind kind) {
    return kind == TaskKind::Bandit ? "bandit" : "sequence";
}

namespace {

TaskKind task_kind_from_string(const std::string& name) {
    if (name == "bandit") {
        return TaskKind::Bandit;
    }
    if (name == "sequence") {
        return TaskKind::Sequence;
    }
    fail(ErrorCode::ConfigError, "task.kind: unknown value '" + name + "'");
}

JudgeKind judge_kind_from_string(const std::string& name) {
    if (name == "reward") {
        return JudgeKind::GroundTruthReward;
    }
    if (name == "external") {
        return JudgeKind::ExternalLLM;
    }
    fail(ErrorCode::ConfigError, "eval.judge: unknown value '" + name + "'");
}

std::string judge_kind_name(JudgeKind kind) {
    return kind == JudgeKind::GroundTruthReward ? "reward" : "external";
}

// Every key of `input` must exist in `defaults`; catches typos that would
// otherwise silently fall back to a default.
void check_known_keys(const json& input, const json& defaults, const std::string& path) {
    if (!input.is_object()) {
        fail(ErrorCode::ConfigError, (path.empty() ? std::string("config") : path) + " must be an object");
    }
    for (const auto& [key, value] : input.items()) {
        const std::string field = path.empty() ? key : path + "." + key;
        if (!defaults.contains(key)) {
            fail(ErrorCode::ConfigError, field + ": unknown field");
        }
        const json& d = defaults.at(key);
        if (d.is_object() && key != "task") {
            check_known_keys(value, d, field);
        }
    }
}

template <typename T>
void read(const json& j, const std::string& path, const char* key, T& out) {
    if (!j.contains(key)) {
        return;
    }
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        fail(ErrorCode::ConfigError, path + "." + key + " has the wrong type");
    }
}

template <typename T, typename Parse>
void read_enum(const json& j, const std::string& path, const char* key, T& out, Parse parse) {
    std::string name;
    read(j, path, key, name);
    if (name.empty()) {
        return;
    }
    try {
        out = parse(name);
    } catch (const Error& e) {
        fail(ErrorCode::ConfigError, path + "." + key + ": unknown value '" + name + "'");
    }
}

json sft_to_json(const SftConfig& c) {
    return {{"learning_rate", c.learning_rate},   {"batch_size", c.batch_size},
            {"max_epochs", c.max_epochs},         {"early_stop_loss", c.early_stop_loss},
            {"schedule", to_string(c.schedule)},  {"warmup_ratio", c.warmup_ratio},
            {"weight_decay", c.weight_decay}};
}

json ditto_to_json(const DittoConfig& c) {
    return {{"samples_per_demo", c.samples_per_demo},
            {"resample_every", c.resample_every},
            {"resample_mode", to_string(c.resample_mode)},
            {"total_steps", c.total_steps},
            {"batch_size", c.batch_size},
            {"alpha", c.alpha},
            {"temperature", c.temperature},
            {"learning_rate", c.dpo_learning_rate},
            {"schedule", to_string(c.dpo_schedule)},
            {"warmup_ratio", c.dpo_warmup_ratio},
            {"weight_decay", c.weight_decay},
            {"pairwise_steps", c.pairwise_steps},
            {"mixture",
             {{"frac_online", c.mixture.frac_online},
              {"frac_replay", c.mixture.frac_replay},
              {"frac_intermodel", c.mixture.frac_intermodel}}},
            {"sft", sft_to_json(c.sft)}};
}

DittoConfig ditto_from_json(const json& j, DittoConfig c) {
    const std::string p = "ditto";
    read(j, p, "samples_per_demo", c.samples_per_demo);
    read(j, p, "resample_every", c.resample_every);
    read_enum(j, p, "resample_mode", c.resample_mode, resample_mode_from_string);
    read(j, p, "total_steps", c.total_steps);
    read(j, p, "batch_size", c.batch_size);
    read(j, p, "alpha", c.alpha);
    read(j, p, "temperature", c.temperature);
    read(j, p, "learning_rate", c.dpo_learning_rate);
    read_enum(j, p, "schedule", c.dpo_schedule, schedule_from_string);
    read(j, p, "warmup_ratio", c.dpo_warmup_ratio);
    read(j, p, "weight_decay", c.weight_decay);
    read(j, p, "pairwise_steps", c.pairwise_steps);
    if (j.contains("mixture")) {
        const json& m = j.at("mixture");
        read(m, p + ".mixture", "frac_online", c.mixture.frac_online);
        read(m, p + ".mixture", "frac_replay", c.mixture.frac_replay);
        read(m, p + ".mixture", "frac_intermodel", c.mixture.frac_intermodel);
    }
    if (j.contains("sft")) {
        const json& s = j.at("sft");
        const std::string sp = p + ".sft";
        read(s, sp, "learning_rate", c.sft.learning_rate);
        read(s, sp, "batch_size", c.sft.batch_size);
        read(s, sp, "max_epochs", c.sft.max_epochs);
        read(s, sp, "early_stop_loss", c.sft.early_stop_loss);
        read_enum(s, sp, "schedule", c.sft.schedule, schedule_from_string);
        read(s, sp, "warmup_ratio", c.sft.warmup_ratio);
        read(s, sp, "weight_decay", c.sft.weight_decay);
    }
    return c;
}

DittoConfig seeded(DittoConfig c, std::uint64_t seed) {
    c.seed = seed;
    c.sft.seed = seed;
    return c;
}

json win_rate_to_json(const WinRateResult& r) {
    json per_prompt = json::array();
    for (const auto& p : r.per_prompt) {
        per_prompt.push_back({{"prompt_id", p.prompt_id}, {"pairs", p.pairs}, {"win_rate", p.win_rate}});
    }
    return {{"win_rate", r.win_rate},       {"wins", r.wins}, {"pairs", r.pairs},
            {"judge_calls", r.judge_calls}, {"sem", r.sem},   {"per_prompt", per_prompt}};
}

WinRateResult win_rate_from_json(const json& j) {
    WinRateResult r;
    r.win_rate = j.at("win_rate").get<double>();
    r.wins = j.at("wins").get<double>();
    r.pairs = j.at("pairs").get<std::size_t>();
    r.judge_calls = j.at("judge_calls").get<std::size_t>();
    r.sem = j.at("sem").get<double>();
    for (const auto& p : j.at("per_prompt")) {
        r.per_prompt.push_back(
            {p.at("prompt_id").get<int>(), p.at("pairs").get<std::size_t>(), p.at("win_rate").get<double>()});
    }
    return r;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream os(path);
    if (!os) {
        fail(ErrorCode::IoError, "cannot write " + path.string());
    }
    os << j.dump(2) << '\n';
    if (!os) {
        fail(ErrorCode::IoError, "write failed for " + path.string());
    }
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorCode::IoError, "cannot open " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        fail(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
}

std::string seed_dir_name(std::uint64_t seed) {
    return "seed-" + std::to_string(seed);
}

void prepare_output(const ExperimentConfig& config, const std::string& kind) {
    std::error_code ec;
    fs::create_directories(config.output_dir, ec);
    if (ec) {
        fail(ErrorCode::IoError, "cannot create " + config.output_dir.string() + ": " + ec.message());
    }
    json copy = config.to_json();
    copy["command"] = kind;
    write_json(config.output_dir / "config.json", copy);
}

SeedError to_seed_error(std::uint64_t seed, const std::exception& e) {
    if (const auto* err = dynamic_cast<const Error*>(&e)) {
        return {seed, std::string(to_string(err->code())), err->detail()};
    }
    return {seed, "Internal", e.what()};
}

// Runs `body` once per seed on the worker pool. Failures are recorded per
// seed and never stop the siblings.
template <typename Result>
std::vector<std::optional<Result>> for_each_seed(const ExperimentConfig& config, std::ostream& log,
                                                 std::vector<SeedError>& errors,
                                                 const std::function<Result(std::uint64_t)>& body) {
    std::vector<std::optional<Result>> results(config.seeds.size());
    std::vector<std::optional<SeedError>> failed(config.seeds.size());
    std::mutex log_mutex;
    parallel_for(config.seeds.size(), config.workers, [&](std::size_t i) {
        const std::uint64_t seed = config.seeds[i];
        try {
            results[i] = body(seed);
            std::lock_guard lock(log_mutex);
            log << "seed " << seed << ": done\n";
        } catch (const std::exception& e) {
            failed[i] = to_seed_error(seed, e);
            std::lock_guard lock(log_mutex);
            log << "seed " << seed << ": " << failed[i]->code << ": " << failed[i]->message << '\n';
        }
    });
    for (auto& f : failed) {
        if (f) {
            errors.push_back(*f);
        }
    }
    return results;
}

json errors_to_json(const std::vector<SeedError>& errors) {
    json out = json::array();
    for (const auto& e : errors) {
        out.push_back(e.to_json());
    }
    return out;
}

std::unique_ptr<Judge> make_judge(const ExperimentConfig& config, const SyntheticTask& task) {
    if (config.eval.judge == JudgeKind::GroundTruthReward) {
        return std::make_unique<RewardJudge>(task.test.reward);
    }
    std::map<int, std::string> references;
    for (const auto& [id, target] : task.targets) {
        references[id] = task.test.vocabulary.render(target);
    }
    return std::make_unique<ExternalJudge>(config.eval.endpoint, task.test.vocabulary, std::move(references));
}

HeadToHeadOptions h2h_options(const ExperimentConfig& config, std::uint64_t seed) {
    HeadToHeadOptions o;
    o.samples_per_prompt = config.eval.samples_per_prompt;
    o.order_swap = config.eval.order_swap;
    o.temperature = 1.0;
    o.seed = seed;
    return o;
}

std::vector<WinRateResult> collect(const std::vector<json>& per_seed, const std::string& key) {
    std::vector<WinRateResult> out;
    for (const auto& s : per_seed) {
        out.push_back(win_rate_from_json(s.at(key)));
    }
    return out;
}

}  // namespace

DittoConfig ExperimentConfig::desk_ditto_defaults() {
    DittoConfig c;
    c.dpo_learning_rate = 3e-2;
    c.sft.learning_rate = 3e-2;
    return c;
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base_dir) {
    ExperimentConfig c;
    if (!j.is_object()) {
        fail(ErrorCode::ConfigError, "config must be a JSON object");
    }
    if (j.contains("task")) {
        const json& t = j.at("task");
        if (!t.is_object()) {
            fail(ErrorCode::ConfigError, "task must be an object");
        }
        std::string kind = "sequence";
        read(t, "task", "kind", kind);
        c.task = task_kind_from_string(kind);
    }
    json defaults = c.to_json();
    check_known_keys(j, defaults, "");
    if (j.contains("task")) {
        json params = j.at("task");
        params.erase("kind");
        check_known_keys(params, c.task == TaskKind::Bandit ? c.bandit.to_json() : c.sequence.to_json(), "task");
        if (c.task == TaskKind::Bandit) {
            c.bandit = BanditParams::from_json(params);
        } else {
            c.sequence = SequenceParams::from_json(params);
        }
    }
    if (j.contains("demos_path") && !j.at("demos_path").is_null()) {
        std::string p;
        read(j, "config", "demos_path", p);
        c.demos_path = (base_dir / p).lexically_normal();
    }
    if (j.contains("ditto")) {
        c.ditto = ditto_from_json(j.at("ditto"), c.ditto);
    }
    read_enum(j, "config", "variant", c.variant, variant_from_string);
    if (j.contains("eval")) {
        const json& e = j.at("eval");
        std::string judge;
        read(e, "eval", "judge", judge);
        if (!judge.empty()) {
            c.eval.judge = judge_kind_from_string(judge);
        }
        read(e, "eval", "samples_per_prompt", c.eval.samples_per_prompt);
        read(e, "eval", "order_swap", c.eval.order_swap);
        if (e.contains("endpoint")) {
            c.eval.endpoint = JudgeEndpoint::from_json(e.at("endpoint"));
        }
    }
    if (j.contains("sweep")) {
        const json& s = j.at("sweep");
        read(s, "sweep", "demo_counts", c.sweep.demo_counts);
        read(s, "sweep", "pair_counts", c.sweep.pair_counts);
        read(s, "sweep", "reference_demos", c.sweep.reference_demos);
    }
    read(j, "config", "seeds", c.seeds);
    std::string out;
    read(j, "config", "output_dir", out);
    if (!out.empty()) {
        c.output_dir = (base_dir / out).lexically_normal();
    }
    read(j, "config", "workers", c.workers);
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorCode::ConfigError, "cannot open config file " + path.string());
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        fail(ErrorCode::ConfigError, path.string() + ": " + e.what());
    }
    return from_json(j, path.has_parent_path() ? path.parent_path() : fs::path("."));
}

json ExperimentConfig::to_json() const {
    json task_json = task == TaskKind::Bandit ? bandit.to_json() : sequence.to_json();
    task_json["kind"] = to_string(task);
    return {{"task", task_json},
            {"demos_path", demos_path ? json(demos_path->string()) : json(nullptr)},
            {"ditto", ditto_to_json(ditto)},
            {"variant", to_string(variant)},
            {"eval",
             {{"judge", judge_kind_name(eval.judge)},
              {"samples_per_prompt", eval.samples_per_prompt},
              {"order_swap", eval.order_swap},
              {"endpoint", eval.endpoint.to_json()}}},
            {"sweep",
             {{"demo_counts", sweep.demo_counts},
              {"pair_counts", sweep.pair_counts},
              {"reference_demos", sweep.reference_demos}}},
            {"seeds", seeds},
            {"output_dir", output_dir.string()},
            {"workers", workers}};
}

void ExperimentConfig::validate() const {
    ditto.validate();
    if (seeds.empty()) {
        fail(ErrorCode::ConfigError, "seeds must not be empty");
    }
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
        fail(ErrorCode::ConfigError, "seeds must be distinct");
    }
    if (workers < 1) {
        fail(ErrorCode::ConfigError, "workers must be at least 1");
    }
    if (eval.samples_per_prompt < 1) {
        fail(ErrorCode::ConfigError, "eval.samples_per_prompt must be at least 1");
    }
    if (eval.judge == JudgeKind::ExternalLLM) {
        eval.endpoint.validate();
    }
    if (demos_path && !fs::is_regular_file(*demos_path)) {
        fail(ErrorCode::ConfigError, "demos_path: no such file " + demos_path->string());
    }
    if (output_dir.empty()) {
        fail(ErrorCode::ConfigError, "output_dir must not be empty");
    }
    if (sweep.demo_counts.empty() || sweep.pair_counts.empty()) {
        fail(ErrorCode::ConfigError, "sweep.demo_counts and sweep.pair_counts must not be empty");
    }
    if (std::find(sweep.demo_counts.begin(), sweep.demo_counts.end(), std::size_t{0}) != sweep.demo_counts.end()) {
        fail(ErrorCode::ConfigError, "sweep.demo_counts entries must be at least 1");
    }
    if (sweep.reference_demos < 1) {
        fail(ErrorCode::ConfigError, "sweep.reference_demos must be at least 1");
    }
}

SyntheticTask build_task(const ExperimentConfig& config, std::uint64_t seed) {
    SyntheticTask task = config.task == TaskKind::Bandit ? make_noisy_bandit(config.bandit, seed)
                                                         : make_sequence_task(config.sequence, seed);
    if (config.demos_path) {
        task.demos = load_demonstrations(*config.demos_path, task.train);
    }
    return task;
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& job) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            job(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                job(i);
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
}

json SeedError::to_json() const {
    return {{"seed", seed}, {"code", code}, {"message", message}};
}

SeriesPoint summarize(std::string series, std::size_t x, const std::vector<WinRateResult>& per_seed) {
    SeriesPoint p{std::move(series), x, 0.0, 0.0, per_seed.size()};
    if (per_seed.empty()) {
        return p;
    }
    for (const auto& r : per_seed) {
        p.win_rate += r.win_rate;
    }
    p.win_rate /= static_cast<double>(per_seed.size());
    if (per_seed.size() == 1) {
        p.sem = per_seed.front().sem;
        return p;
    }
    double ss = 0.0;
    for (const auto& r : per_seed) {
        ss += (r.win_rate - p.win_rate) * (r.win_rate - p.win_rate);
    }
    const double n = static_cast<double>(per_seed.size());
    p.sem = std::sqrt(ss / (n - 1.0) / n);
    return p;
}

void write_ablation_csv(const fs::path& path, const std::vector<SeriesPoint>& rows) {
    std::ofstream os(path);
    if (!os) {
        fail(ErrorCode::IoError, "cannot write " + path.string());
    }
    // Percent change relative to the Full row, which compares Full with itself.
    double full = 0.5;
    for (const auto& r : rows) {
        if (r.series == to_string(AblationVariant::Full)) {
            full = r.win_rate;
        }
    }
    os << "variant,win_rate_vs_full,sem,normalized_pct,seeds\n" << std::setprecision(10);
    for (const auto& r : rows) {
        const double normalized = full > 0.0 ? 100.0 * (r.win_rate - full) / full : 0.0;
        os << r.series << ',' << r.win_rate << ',' << r.sem << ',' << normalized << ',' << r.seeds << '\n';
    }
    if (!os) {
        fail(ErrorCode::IoError, "write failed for " + path.string());
    }
}

void write_series_csv(const fs::path& path, const std::string& x_name, const std::vector<SeriesPoint>& rows) {
    std::ofstream os(path);
    if (!os) {
        fail(ErrorCode::IoError, "cannot write " + path.string());
    }
    os << "series," << x_name << ",win_rate,sem,seeds\n" << std::setprecision(10);
    for (const auto& r : rows) {
        os << r.series << ',' << r.x << ',' << r.win_rate << ',' << r.sem << ',' << r.seeds << '\n';
    }
    if (!os) {
        fail(ErrorCode::IoError, "write failed for " + path.string());
    }
}

// ---------------------------------------------------------------------------
// run

namespace {

json run_one_seed(const ExperimentConfig& config, std::uint64_t seed) {
    const SyntheticTask task = build_task(config, seed);
    RunOptions options;
    if (task.reward) {
        options.reward = &*task.reward;
    }
    const RunArtifact run =
        ditto_run(task.train, task.demos, *task.reference, seeded(config.ditto, seed), config.variant, options);

    const fs::path dir = config.output_dir / seed_dir_name(seed);
    fs::create_directories(dir / "snapshots");
    {
        std::ofstream os(dir / "metrics.jsonl");
        if (!os) {
            fail(ErrorCode::IoError, "cannot write " + (dir / "metrics.jsonl").string());
        }
        for (const auto& m : run.metrics) {
            json line = {{"step", m.step},
                         {"iteration", m.iteration},
                         {"loss", m.loss ? json(*m.loss) : json(nullptr)},
                         {"true_reward", m.true_reward ? json(*m.true_reward) : json(nullptr)},
                         {"j_kl", m.j_kl ? json(*m.j_kl) : json(nullptr)},
                         {"emitted", m.batch.emitted},
                         {"redraws", m.batch.redraws},
                         {"skipped", m.batch.skipped}};
            os << line.dump() << '\n';
        }
    }
    for (const auto& snap : run.snapshots) {
        save_checkpoint(snap, dir / "snapshots" / ("iter-" + std::to_string(snap.iteration()) + ".ckpt"));
    }

    json summary = {{"seed", seed},
                    {"sft_steps", run.sft.steps},
                    {"sft_epoch_nll", run.sft.epoch_nll},
                    {"snapshots", run.snapshots.size()},
                    {"skipped_pairs", run.skipped_pairs},
                    {"final_fingerprint", run.final_snapshot().fingerprint()}};
    if (task.reward) {
        const RewardFn& r = task.reward->function();
        summary["demo_mean_reward"] = expected_reward(std::span<const Demonstration>(task.demos), r);
        summary["sft_reward"] = expected_reward(run.sft.snapshot.policy(), r, task.test);
        summary["final_reward"] = expected_reward(run.final_snapshot().policy(), r, task.test);
        summary["final_j_kl"] = j_kl(run.final_snapshot().policy(), run.sft.snapshot.policy(), r,
                                     task.reward->alpha(), task.test);
    }
    write_json(dir / "summary.json", summary);
    return summary;
}

void write_run_csv(const fs::path& path, const json& results) {
    std::ofstream os(path);
    if (!os) {
        fail(ErrorCode::IoError, "cannot write " + path.string());
    }
    os << "seed,demo_mean_reward,sft_reward,final_reward,final_j_kl,skipped_pairs\n" << std::setprecision(10);
    auto field = [](const json& s, const char* key) {
        return s.contains(key) ? s.at(key).dump() : std::string();
    };
    for (const auto& s : results.at("seeds")) {
        os << s.at("seed").get<std::uint64_t>() << ',' << field(s, "demo_mean_reward") << ','
           << field(s, "sft_reward") << ',' << field(s, "final_reward") << ',' << field(s, "final_j_kl") << ','
           << s.at("skipped_pairs").get<std::size_t>() << '\n';
    }
}

}  // namespace

int cmd_run(const ExperimentConfig& config, std::ostream& log) {
    config.validate();
    prepare_output(config, "run");
    std::vector<SeedError> errors;
    const auto results =
        for_each_seed<json>(config, log, errors, [&](std::uint64_t seed) { return run_one_seed(config, seed); });

    json seeds = json::array();
    std::size_t extrapolated = 0;
    std::size_t beat_sft = 0;
    std::size_t with_reward = 0;
    for (const auto& r : results) {
        if (!r) {
            continue;
        }
        seeds.push_back(*r);
        if (r->contains("final_reward")) {
            ++with_reward;
            const double fin = r->at("final_reward").get<double>();
            extrapolated += fin > r->at("demo_mean_reward").get<double>() ? 1 : 0;
            beat_sft += fin > r->at("sft_reward").get<double>() ? 1 : 0;
        }
    }
    for (const auto& e : errors) {
        const fs::path dir = config.output_dir / seed_dir_name(e.seed);
        fs::create_directories(dir);
        write_json(dir / "error.json", e.to_json());
    }
    json aggregate = {{"kind", "run"},
                      {"variant", to_string(config.variant)},
                      {"seeds", seeds},
                      {"failures", errors_to_json(errors)},
                      {"seeds_with_reward", with_reward},
                      {"final_above_demo_mean", extrapolated},
                      {"final_above_sft", beat_sft}};
    write_json(config.output_dir / "results.json", aggregate);
    write_run_csv(config.output_dir / "runs.csv", aggregate);
    log << "run: " << seeds.size() << " of " << config.seeds.size() << " seeds succeeded; final reward above demo mean in "
        << extrapolated << ", above SFT in " << beat_sft << '\n';
    return errors.empty() ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------------------
// ablate

namespace {

void render_ablation(const fs::path& dir, const json& results) {
    std::vector<json> per_seed(results.at("seeds").begin(), results.at("seeds").end());
    std::vector<SeriesPoint> rows;
    std::vector<WinRateRow> comparisons;
    for (const AblationVariant v : kAllVariants) {
        const std::string name(to_string(v));
        rows.push_back(summarize(name, 0, collect(per_seed, name)));
        for (const auto& s : per_seed) {
            const std::string prefix = seed_dir_name(s.at("seed").get<std::uint64_t>()) + "/";
            comparisons.push_back({prefix + name, prefix + "full", results.at("judge").get<std::string>(),
                                   win_rate_from_json(s.at(name))});
        }
    }
    write_ablation_csv(dir / "ablation.csv", rows);
    write_win_rate_csv(dir / "comparisons.csv", comparisons);
}

}  // namespace

int cmd_ablate(const ExperimentConfig& config, std::ostream& log) {
    config.validate();
    prepare_output(config, "ablate");
    std::vector<SeedError> errors;
    const auto results = for_each_seed<json>(config, log, errors, [&](std::uint64_t seed) {
        const SyntheticTask task = build_task(config, seed);
        const DittoConfig ditto = seeded(config.ditto, seed);
        const RunArtifact full = ditto_run(task.train, task.demos, *task.reference, ditto, AblationVariant::Full);
        const auto judge = make_judge(config, task);
        const HeadToHeadOptions h2h = h2h_options(config, seed);
        const Policy& full_policy = full.final_snapshot().policy();
        json out = {{"seed", seed}};
        for (const AblationVariant v : kAllVariants) {
            RunOptions options;
            options.sft = full.sft;
            const RunArtifact run = v == AblationVariant::Full
                                        ? full
                                        : ditto_run(task.train, task.demos, *task.reference, ditto, v, options);
            out[std::string(to_string(v))] =
                win_rate_to_json(head_to_head(run.final_snapshot().policy(), full_policy, task.test, *judge, h2h));
        }
        return out;
    });
    json seeds = json::array();
    for (const auto& r : results) {
        if (r) {
            seeds.push_back(*r);
        }
    }
    json out = {{"kind", "ablate"},
                {"judge", judge_kind_name(config.eval.judge)},
                {"seeds", seeds},
                {"failures", errors_to_json(errors)}};
    write_json(config.output_dir / "results.json", out);
    if (!seeds.empty()) {
        render_ablation(config.output_dir, out);
    }
    log << "ablate: " << seeds.size() << " of " << config.seeds.size() << " seeds succeeded\n";
    return errors.empty() ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------------------
// sample-efficiency

namespace {

void render_sample_efficiency(const fs::path& dir, const json& results) {
    std::vector<json> per_seed(results.at("seeds").begin(), results.at("seeds").end());
    auto series = [&](const std::string& group, const std::string& name, const std::vector<std::size_t>& xs) {
        std::vector<SeriesPoint> rows;
        for (const std::size_t x : xs) {
            std::vector<WinRateResult> at_x;
            for (const auto& s : per_seed) {
                at_x.push_back(win_rate_from_json(s.at(group).at(std::to_string(x))));
            }
            rows.push_back(summarize(name, x, at_x));
        }
        return rows;
    };
    const auto demo_counts = results.at("demo_counts").get<std::vector<std::size_t>>();
    const auto pair_counts = results.at("pair_counts").get<std::vector<std::size_t>>();
    write_series_csv(dir / "demo_sweep.csv", "demos", series("demo_sweep", "ditto_vs_1_demo", demo_counts));
    write_series_csv(dir / "pairwise_base.csv", "pairs", series("pairwise_base", "base", pair_counts));
    write_series_csv(dir / "pairwise_sft.csv", "pairs", series("pairwise_sft", "sft", pair_counts));
}

}  // namespace

int cmd_sample_efficiency(const ExperimentConfig& config, std::ostream& log) {
    config.validate();
    prepare_output(config, "sample-efficiency");
    const auto& sweep = config.sweep;
    const std::size_t needed =
        std::max(*std::max_element(sweep.demo_counts.begin(), sweep.demo_counts.end()), sweep.reference_demos);
    ExperimentConfig sized = config;
    sized.bandit.demos = std::max(sized.bandit.demos, needed);
    sized.sequence.demos = std::max(sized.sequence.demos, needed);

    std::vector<SeedError> errors;
    const auto results = for_each_seed<json>(config, log, errors, [&](std::uint64_t seed) {
        const SyntheticTask task = build_task(sized, seed);
        const DittoConfig ditto = seeded(config.ditto, seed);
        const auto judge = make_judge(config, task);
        const HeadToHeadOptions h2h = h2h_options(config, seed);

        std::map<std::size_t, RunArtifact> runs;
        auto run_with = [&](std::size_t n) -> const RunArtifact& {
            auto it = runs.find(n);
            if (it == runs.end()) {
                const SyntheticTask sub = with_demo_count(task, n);
                it = runs.emplace(n, ditto_run(sub.train, sub.demos, *sub.reference, ditto, AblationVariant::Full))
                         .first;
            }
            return it->second;
        };

        json out = {{"seed", seed}};
        const Policy& one = run_with(1).final_snapshot().policy();
        for (const std::size_t n : sweep.demo_counts) {
            out["demo_sweep"][std::to_string(n)] =
                win_rate_to_json(head_to_head(run_with(n).final_snapshot().policy(), one, task.test, *judge, h2h));
        }

        const RunArtifact& anchor = run_with(sweep.reference_demos);
        const SyntheticTask anchor_task = with_demo_count(task, sweep.reference_demos);
        const PolicySnapshot base = snapshot(*task.reference, 0);
        struct Source {
            const char* key;
            const PolicySnapshot* start;
            std::uint64_t salt;
        };
        for (const Source& src : {Source{"pairwise_base", &base, 77}, Source{"pairwise_sft", &anchor.sft.snapshot, 177}}) {
            for (std::size_t i = 0; i < sweep.pair_counts.size(); ++i) {
                const std::size_t count = sweep.pair_counts[i];
                std::vector<ComparisonTriple> pairs;
                if (count > 0) {
                    Rng rng(mix_seed(seed, src.salt + i));
                    pairs = synth_annotate(src.start->policy(), anchor_task.train, anchor_task.train.reward, count, rng);
                }
                const PolicySnapshot tuned = pairwise_dpo_baseline(*src.start, pairs, ditto);
                out[src.key][std::to_string(count)] = win_rate_to_json(
                    head_to_head(tuned.policy(), anchor.final_snapshot().policy(), task.test, *judge, h2h));
            }
        }
        return out;
    });
    json seeds = json::array();
    for (const auto& r : results) {
        if (r) {
            seeds.push_back(*r);
        }
    }
    json out = {{"kind", "sample_efficiency"},
                {"judge", judge_kind_name(config.eval.judge)},
                {"demo_counts", sweep.demo_counts},
                {"pair_counts", sweep.pair_counts},
                {"reference_demos", sweep.reference_demos},
                {"seeds", seeds},
                {"failures", errors_to_json(errors)}};
    write_json(config.output_dir / "results.json", out);
    if (!seeds.empty()) {
        render_sample_efficiency(config.output_dir, out);
    }
    log << "sample-efficiency: " << seeds.size() << " of " << config.seeds.size() << " seeds succeeded\n";
    return errors.empty() ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------------------
// verify / report

int cmd_verify(const fs::path& report_path, std::ostream& log) {
    const VerificationReport report = verify_theory();
    const json j = report.to_json();
    if (report_path.empty()) {
        log << j.dump(2) << '\n';
    } else {
        write_json(report_path, j);
    }
    for (const auto& s : report.sweeps) {
        if (s.failures > 0 && s.first_failure) {
            log << "first failure in " << s.name << ": " << s.first_failure->to_json().dump() << '\n';
            break;
        }
    }
    return report.all_pass() ? kExitOk : kExitFailure;
}

int cmd_report(const fs::path& output_dir, std::ostream& log) {
    const json results = read_json(output_dir / "results.json");
    const std::string kind = results.value("kind", "");
    try {
        if (kind == "run") {
            write_run_csv(output_dir / "runs.csv", results);
        } else if (kind == "ablate") {
            render_ablation(output_dir, results);
        } else if (kind == "sample_efficiency") {
            render_sample_efficiency(output_dir, results);
        } else {
            fail(ErrorCode::ParseError, (output_dir / "results.json").string() + ": unknown kind '" + kind + "'");
        }
    } catch (const json::exception& e) {
        fail(ErrorCode::ParseError, (output_dir / "results.json").string() + ": " + e.what());
    }
    log << "report: re-rendered " << kind << " CSVs in " << output_dir.string() << '\n';
    return kExitOk;
}

}  // namespace demoalign
