#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "test_support.hpp"
#include "webgym/bc.hpp"

#include <cmath>

using namespace webgym;
using namespace testsupport;

namespace {

PolicyConfig tiny_config() {
    PolicyConfig cfg;
    cfg.vocab = 259; // byte texts require the full byte range
    cfg.embed_dim = 8;
    cfg.hidden_dim = 8;
    cfg.max_seq = 8192;
    return cfg;
}

} // namespace

TEST_CASE("synthesized demos replay to reward 1") {
    const auto suite = generate_task_suite(TaskFamily::Navigate, 10, 5);
    const PromptConfig cfg(true);
    const auto demos = synthesize_demos(suite, cfg);
    REQUIRE(demos.size() == 10);
    for (size_t i = 0; i < demos.size(); ++i) {
        const Demonstration& demo = demos[i];
        WorldState w = new_world(suite[i]);
        for (const DemoTurn& turn : demo.turns) {
            const auto msg = parse_response(turn.agent_text, cfg);
            CHECK(msg.parsed_action == turn.action);
            const StepResult r = apply_action(w, msg.parsed_action);
            CHECK_FALSE(r.invalid_action);
        }
        CHECK(evaluate(w, suite[i].rubric) == 1);
    }
}

TEST_CASE("think mode wraps every turn, plain mode stays bare") {
    const auto suite = generate_task_suite(TaskFamily::LookupAnswer, 3, 6);
    const auto think_demos = synthesize_demos(suite, PromptConfig(true));
    for (const auto& demo : think_demos)
        for (const auto& turn : demo.turns) {
            CHECK(turn.agent_text.find("<think>") != std::string::npos);
            CHECK(turn.agent_text.find("<answer>") != std::string::npos);
            CHECK(turn.remark.has_value());
        }
    const auto plain_demos = synthesize_demos(suite, PromptConfig(false));
    for (const auto& demo : plain_demos)
        for (const auto& turn : demo.turns) {
            CHECK(turn.agent_text.find("<think>") == std::string::npos);
            CHECK(turn.agent_text == format_action(turn.action));
        }
}

TEST_CASE("extended CoT demos carry longer think spans") {
    const auto suite = generate_task_suite(TaskFamily::Navigate, 3, 8);
    const auto plain = synthesize_demos(suite, PromptConfig(true), false);
    const auto cot = synthesize_demos(suite, PromptConfig(true), true);
    for (size_t i = 0; i < plain.size(); ++i)
        for (size_t j = 0; j < plain[i].turns.size(); ++j)
            CHECK(cot[i].turns[j].agent_text.size() > plain[i].turns[j].agent_text.size());
}

TEST_CASE("demo files round-trip through the trajectory format") {
    const auto dir = temp_dir("demos");
    const auto suite = generate_task_suite(TaskFamily::FormFill, 4, 9);
    const auto demos = synthesize_demos(suite, PromptConfig(true));
    save_demos(dir + "/demos.jsonl", demos);
    const auto loaded = load_demos(dir + "/demos.jsonl", suite);
    REQUIRE(loaded.size() == demos.size());
    for (size_t i = 0; i < demos.size(); ++i) {
        CHECK(loaded[i].task_id == demos[i].task_id);
        CHECK(loaded[i].instruction == demos[i].instruction);
        REQUIRE(loaded[i].turns.size() == demos[i].turns.size());
        for (size_t j = 0; j < demos[i].turns.size(); ++j) {
            CHECK(loaded[i].turns[j].agent_text == demos[i].turns[j].agent_text);
            CHECK(loaded[i].turns[j].action == demos[i].turns[j].action);
            CHECK(loaded[i].turns[j].observation == demos[i].turns[j].observation);
        }
    }
}

TEST_CASE("fresh uniform policy has loss ln(vocab)") {
    const auto suite = generate_task_suite(TaskFamily::Navigate, 2, 10);
    const auto demos = synthesize_demos(suite, PromptConfig(true));
    const auto examples = make_bc_examples(demos, PromptConfig(true));
    REQUIRE_FALSE(examples.empty());

    const auto params = init_params(PolicyConfig{}, 0);
    std::vector<const MaterializedContext*> batch;
    for (const auto& ex : examples) batch.push_back(&ex);
    const double loss = bc_loss_value(params, batch);
    CHECK(loss == doctest::Approx(std::log(259.0)).epsilon(1e-12));
}

TEST_CASE("bc_loss gradient matches finite differences") {
    // Tiny dims keep the FD sweep fast; byte vocabulary stays full-size.
    const auto suite = generate_task_suite(TaskFamily::Navigate, 1, 11);
    PromptConfig cfg(false); // shorter agent texts
    auto demos = synthesize_demos(suite, cfg);
    // truncate context cost: keep only the first turn
    demos[0].turns.resize(1);
    auto examples = make_bc_examples(demos, cfg);
    REQUIRE(examples.size() == 1);

    const auto params = init_params(tiny_config(), 3);
    std::vector<const MaterializedContext*> batch{&examples[0]};

    std::vector<double> grad = params.zeros_like();
    const double loss = bc_loss(params, batch, grad);
    CHECK(loss == doctest::Approx(bc_loss_value(params, batch)).epsilon(1e-12));

    const auto fd = finite_difference_grad(
        params, [&](const PolicyParams& p) { return bc_loss_value(p, batch); }, 1e-5);
    CHECK(max_relative_error(grad, fd) < 1e-6);
}

TEST_CASE("empty batches are rejected") {
    const auto params = init_params(tiny_config(), 0);
    std::vector<double> grad = params.zeros_like();
    std::vector<const MaterializedContext*> batch;
    CHECK_THROWS_AS(bc_loss(params, batch, grad), std::invalid_argument);
}

TEST_CASE("perfect-memorization loss approaches zero") {
    // Single degenerate example with a one-token action; a few hundred Adam
    // steps drive its probability to ~1.
    std::vector<Token> prompt = {kTokenBos};
    append_tokens(prompt, "Q");
    std::vector<Token> action = {static_cast<Token>('a')};
    const auto ctx = make_training_context(prompt, action);
    auto params = init_params(tiny_config(), 1);
    Adam opt({1e-2, 0.9, 0.999, 1e-8}, params.size());
    std::vector<double> grad = params.zeros_like();
    std::vector<const MaterializedContext*> batch{&ctx};
    double loss = 0.0;
    for (int i = 0; i < 300; ++i) {
        std::fill(grad.begin(), grad.end(), 0.0);
        loss = bc_loss(params, batch, grad);
        opt.step(params.data, grad);
    }
    CHECK(loss < 0.05);
}

TEST_CASE("mask discipline: label identities at masked-false positions are inert") {
    const auto suite = generate_task_suite(TaskFamily::LookupAnswer, 1, 12);
    const auto demos = synthesize_demos(suite, PromptConfig(true));
    auto examples = make_bc_examples(demos, PromptConfig(true));
    REQUIRE_FALSE(examples.empty());
    const auto params = init_params(tiny_config(), 7);

    std::vector<const MaterializedContext*> batch{&examples[0]};
    std::vector<double> grad = params.zeros_like();
    const double base_loss = bc_loss(params, batch, grad);

    Rng rng(3);
    for (int it = 0; it < 100; ++it) {
        MaterializedContext fuzzed = examples[0];
        for (int k = 0; k < 8; ++k) {
            const size_t pos = rng.next_below(fuzzed.targets.size());
            if (fuzzed.loss_mask[pos]) continue;
            fuzzed.targets[pos] = static_cast<Token>(rng.next_below(256));
        }
        std::vector<const MaterializedContext*> fuzzed_batch{&fuzzed};
        std::vector<double> fuzzed_grad = params.zeros_like();
        const double fuzzed_loss = bc_loss(params, fuzzed_batch, fuzzed_grad);
        CHECK(fuzzed_loss == base_loss);
        CHECK(fuzzed_grad == grad);
    }

    SUBCASE("input tokens do condition the loss") {
        MaterializedContext changed = examples[0];
        bool flipped = false;
        for (size_t pos = changed.tokens.size(); pos-- > 0 && !flipped;) {
            if (!changed.loss_mask[pos] && changed.tokens[pos] < 256) {
                changed.tokens[pos] = changed.tokens[pos] == 'x' ? 'y' : 'x';
                flipped = true;
            }
        }
        REQUIRE(flipped);
        std::vector<const MaterializedContext*> changed_batch{&changed};
        CHECK(bc_loss_value(params, changed_batch) != base_loss);
    }
}

TEST_CASE("short training run strictly reduces the smoothed loss") {
    const auto suite = generate_task_suite(TaskFamily::Navigate, 4, 13);
    const PromptConfig prompt_cfg(false);
    const auto demos = synthesize_demos(suite, prompt_cfg);

    BcConfig cfg;
    cfg.policy = PolicyConfig{};
    cfg.policy.embed_dim = 16;
    cfg.policy.hidden_dim = 16;
    cfg.updates = 300;
    cfg.batch_size = 4;
    cfg.learning_rate = 3e-3;
    cfg.seed = 1;
    const BcResult result = train_bc(demos, cfg, prompt_cfg);
    REQUIRE(result.metrics.rows.size() == 300);
    const auto losses = result.metrics.column("loss");
    double head = 0.0, tail = 0.0;
    for (int i = 0; i < 20; ++i) {
        head += losses[static_cast<size_t>(i)];
        tail += losses[losses.size() - 1 - static_cast<size_t>(i)];
    }
    CHECK(tail < head * 0.6);

    SUBCASE("training is deterministic under the seed") {
        const BcResult again = train_bc(demos, cfg, prompt_cfg);
        CHECK(again.params.data == result.params.data);
        CHECK(metrics_to_text(again.metrics) == metrics_to_text(result.metrics));
    }
}
