#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "ppcov/coverage.hpp"
#include "ppcov/errors.hpp"
#include "ppcov/neural.hpp"
#include "support/synthetic.hpp"
#include "support/tmpdir.hpp"

using namespace ppcov;
using nd::Tensor;

namespace {

Tensor rand_t(std::vector<std::size_t> shape, double range, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return Tensor::uniform(std::move(shape), range, rng);
}

double sigmoid_s(double x) { return 1.0 / (1.0 + std::exp(-x)); }

neural::ModelConfig toy_config(neural::Architecture arch, std::uint64_t seed) {
    neural::ModelConfig config;
    config.architecture = arch;
    config.lstm_units = 8;
    config.lstm_blocks = 1;
    config.recurrent_dropout = 0.0;
    config.optimizer = nd::OptimizerKind::kAdamLr001;
    config.epochs = 30;
    config.batch_size = 8;
    config.patience = 10;
    config.min_improvement = 1e-4;
    config.seed = seed;
    config.cnn.filter_widths = {2, 3};
    config.cnn.filters_per_width = 8;
    config.cnn.dropout_rate = 0.0;
    return config;
}

// Central-difference check over the exact forward graph the trainer uses.
double model_gradcheck(neural::Model& model,
                       const std::vector<features::EncodedSequence>& batch,
                       const Tensor& onehot, std::size_t probes, std::uint64_t seed) {
    auto loss_value = [&]() {
        nd::Tape tape;
        auto graph = neural::build_forward(tape, model, batch, false, nullptr);
        nd::Var loss = tape.cross_entropy_mean(tape.softmax_rows(graph.logits), onehot);
        return tape.value(loss)[0];
    };

    std::map<std::string, Tensor> analytic;
    {
        nd::Tape tape;
        auto graph = neural::build_forward(tape, model, batch, false, nullptr);
        nd::Var loss = tape.cross_entropy_mean(tape.softmax_rows(graph.logits), onehot);
        tape.backward(loss);
        for (const auto& [name, var] : graph.params) analytic[name] = tape.grad(var);
    }

    std::vector<std::string> names;
    for (const auto& [name, tensor] : model.params) names.push_back(name);

    std::mt19937_64 rng(seed);
    const double step = 1e-5;
    double worst = 0.0;
    for (std::size_t p = 0; p < probes; ++p) {
        const std::string& name = names[rng() % names.size()];
        Tensor& param = model.params.at(name);
        std::size_t idx = rng() % param.size();

        double saved = param[idx];
        param[idx] = saved + step;
        double up = loss_value();
        param[idx] = saved - step;
        double down = loss_value();
        param[idx] = saved;

        double numeric = (up - down) / (2.0 * step);
        double exact = analytic.at(name)[idx];
        double mag = std::max(std::abs(numeric), std::abs(exact));
        if (mag < 1e-7) continue;
        worst = std::max(worst, std::abs(numeric - exact) / mag);
    }
    return worst;
}

}  // namespace

TEST_CASE("architecture names round-trip") {
    for (auto arch : {neural::Architecture::kCnn, neural::Architecture::kLstm,
                      neural::Architecture::kBiLstm, neural::Architecture::kCnnLstm}) {
        CHECK(neural::architecture_from_string(neural::architecture_name(arch)) == arch);
    }
    CHECK_THROWS_AS(neural::architecture_from_string("gru"), UsageError);
}

TEST_CASE("rnn step follows the recurrence with zero weights") {
    neural::RnnCellParams params;
    params.w_xh = Tensor::zeros({2, 3});
    params.w_hh = Tensor::zeros({3, 3});
    params.b_h = Tensor::zeros({3});
    params.w_hy = Tensor::zeros({3, 2});
    params.b_y = Tensor({2}, {0.4, -0.7});

    auto out = neural::rnn_step(params, Tensor::zeros({1, 2}), Tensor::zeros({1, 3}));
    for (std::size_t u = 0; u < 3; ++u) {
        CHECK(out.h.at(0, u) == doctest::Approx(0.5).epsilon(1e-15));
    }
    CHECK(out.y.at(0, 0) == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(out.y.at(0, 1) == doctest::Approx(-0.7).epsilon(1e-15));

    neural::RnnCellParams scalar;
    scalar.w_xh = Tensor({1, 1}, {1.0});
    scalar.w_hh = Tensor::zeros({1, 1});
    scalar.b_h = Tensor::zeros({1});
    scalar.w_hy = Tensor::zeros({1, 1});
    scalar.b_y = Tensor::zeros({1});
    auto s = neural::rnn_step(scalar, Tensor({1, 1}, {2.0}), Tensor::zeros({1, 1}));
    CHECK(s.h.at(0, 0) == doctest::Approx(sigmoid_s(2.0)).epsilon(1e-15));
}

TEST_CASE("rnn unrolled run matches a hand-rolled loop oracle") {
    const std::size_t in = 2;
    const std::size_t units = 3;
    const std::size_t out_dim = 2;
    neural::RnnCellParams params;
    params.w_xh = rand_t({in, units}, 0.6, 41);
    params.w_hh = rand_t({units, units}, 0.6, 42);
    params.b_h = rand_t({units}, 0.6, 43);
    params.w_hy = rand_t({units, out_dim}, 0.6, 44);
    params.b_y = rand_t({out_dim}, 0.6, 45);

    std::vector<Tensor> xs;
    for (int t = 0; t < 4; ++t) xs.push_back(rand_t({1, in}, 1.0, 50 + t));

    Tensor h = Tensor::zeros({1, units});
    for (int t = 0; t < 4; ++t) {
        auto stepped = neural::rnn_step(params, xs[static_cast<std::size_t>(t)], h);

        std::vector<double> h_want(units, 0.0);
        for (std::size_t u = 0; u < units; ++u) {
            double acc = params.b_h[u];
            for (std::size_t i = 0; i < in; ++i) {
                acc += xs[static_cast<std::size_t>(t)].at(0, i) * params.w_xh.at(i, u);
            }
            for (std::size_t v = 0; v < units; ++v) acc += h.at(0, v) * params.w_hh.at(v, u);
            h_want[u] = sigmoid_s(acc);
        }
        for (std::size_t u = 0; u < units; ++u) {
            CHECK(stepped.h.at(0, u) == doctest::Approx(h_want[u]).epsilon(1e-12));
        }
        for (std::size_t o = 0; o < out_dim; ++o) {
            double acc = params.b_y[o];
            for (std::size_t u = 0; u < units; ++u) acc += h_want[u] * params.w_hy.at(u, o);
            CHECK(stepped.y.at(0, o) == doctest::Approx(acc).epsilon(1e-12));
        }
        h = stepped.h;
    }
}

namespace {

neural::LstmCellParams zero_lstm(std::size_t in, std::size_t units) {
    neural::LstmCellParams p;
    p.w_xi = Tensor::zeros({in, units});
    p.w_hi = Tensor::zeros({units, units});
    p.w_ci = Tensor::zeros({units});
    p.b_i = Tensor::zeros({units});
    p.w_xf = Tensor::zeros({in, units});
    p.w_hf = Tensor::zeros({units, units});
    p.w_cf = Tensor::zeros({units});
    p.b_f = Tensor::zeros({units});
    p.w_xc = Tensor::zeros({in, units});
    p.w_hc = Tensor::zeros({units, units});
    p.b_c = Tensor::zeros({units});
    p.w_xo = Tensor::zeros({in, units});
    p.w_ho = Tensor::zeros({units, units});
    p.w_co = Tensor::zeros({units});
    p.b_o = Tensor::zeros({units});
    return p;
}

}  // namespace

TEST_CASE("lstm step: zero parameters give a dead cell") {
    auto params = zero_lstm(2, 3);
    auto out = neural::lstm_step(params, Tensor::zeros({1, 2}), Tensor::zeros({1, 3}),
                                 Tensor::zeros({1, 3}));
    for (std::size_t u = 0; u < 3; ++u) {
        CHECK(out.c.at(0, u) == doctest::Approx(0.0).epsilon(1e-15));
        CHECK(out.h.at(0, u) == doctest::Approx(0.0).epsilon(1e-15));
    }
}

TEST_CASE("lstm step: saturated gates carry the cell state") {
    auto params = zero_lstm(2, 3);
    params.b_f = Tensor::full({3}, 30.0);
    params.b_i = Tensor::full({3}, -30.0);
    Tensor c_prev({1, 3}, {0.7, -0.4, 1.2});
    auto out = neural::lstm_step(params, Tensor::zeros({1, 2}), Tensor::zeros({1, 3}), c_prev);
    for (std::size_t u = 0; u < 3; ++u) {
        CHECK(out.c.at(0, u) == doctest::Approx(c_prev.at(0, u)).epsilon(1e-12));
    }
}

TEST_CASE("lstm multi-step run matches an independent oracle") {
    const std::size_t in = 3;
    const std::size_t units = 2;
    const std::size_t batch = 2;
    neural::LstmCellParams p;
    std::uint64_t s = 60;
    p.w_xi = rand_t({in, units}, 0.5, s++);
    p.w_hi = rand_t({units, units}, 0.5, s++);
    p.w_ci = rand_t({units}, 0.5, s++);
    p.b_i = rand_t({units}, 0.5, s++);
    p.w_xf = rand_t({in, units}, 0.5, s++);
    p.w_hf = rand_t({units, units}, 0.5, s++);
    p.w_cf = rand_t({units}, 0.5, s++);
    p.b_f = rand_t({units}, 0.5, s++);
    p.w_xc = rand_t({in, units}, 0.5, s++);
    p.w_hc = rand_t({units, units}, 0.5, s++);
    p.b_c = rand_t({units}, 0.5, s++);
    p.w_xo = rand_t({in, units}, 0.5, s++);
    p.w_ho = rand_t({units, units}, 0.5, s++);
    p.w_co = rand_t({units}, 0.5, s++);
    p.b_o = rand_t({units}, 0.5, s++);

    Tensor h = Tensor::zeros({batch, units});
    Tensor c = Tensor::zeros({batch, units});
    for (int t = 0; t < 3; ++t) {
        Tensor x = rand_t({batch, in}, 1.0, 90 + static_cast<std::uint64_t>(t));
        auto stepped = neural::lstm_step(p, x, h, c);

        // Straight-line recomputation of the gate equations.
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t u = 0; u < units; ++u) {
                auto affine = [&](const Tensor& wx, const Tensor& wh, double bias) {
                    double acc = bias;
                    for (std::size_t i = 0; i < in; ++i) acc += x.at(b, i) * wx.at(i, u);
                    for (std::size_t v = 0; v < units; ++v) acc += h.at(b, v) * wh.at(v, u);
                    return acc;
                };
                double gi = sigmoid_s(affine(p.w_xi, p.w_hi, p.b_i[u]) + p.w_ci[u] * c.at(b, u));
                double gf = sigmoid_s(affine(p.w_xf, p.w_hf, p.b_f[u]) + p.w_cf[u] * c.at(b, u));
                double cand = std::tanh(affine(p.w_xc, p.w_hc, p.b_c[u]));
                double c_new = gf * c.at(b, u) + gi * cand;
                double go = sigmoid_s(affine(p.w_xo, p.w_ho, p.b_o[u]) + p.w_co[u] * c_new);
                double h_new = go * std::tanh(c_new);
                CHECK(stepped.c.at(b, u) == doctest::Approx(c_new).epsilon(1e-12));
                CHECK(stepped.h.at(b, u) == doctest::Approx(h_new).epsilon(1e-12));
            }
        }
        h = stepped.h;
        c = stepped.c;
    }
}

TEST_CASE("conv_maxpool matches hand cases and brute force") {
    // Width-1 identity filter over a scalar sequence.
    Tensor sentence({3, 1}, {0.2, 0.9, 0.1});
    Tensor filter({1, 1}, {1.0});
    Tensor bias({1}, {0.0});
    auto out = neural::conv_maxpool(sentence, filter, bias, 1);
    CHECK(out.feature_map.vec() == std::vector<double>{0.2, 0.9, 0.1});
    REQUIRE(out.pooled.size() == 1);
    CHECK(out.pooled[0] == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(out.argmax[0] == 1);

    Tensor neg_bias({1}, {-5.0});
    auto floored = neural::conv_maxpool(sentence, filter, neg_bias, 1);
    CHECK(floored.pooled[0] == 0.0);

    const std::size_t len = 20;
    const std::size_t dim = 5;
    const std::size_t width = 3;
    const std::size_t n_filters = 4;
    Tensor sent = rand_t({len, dim}, 1.0, 7);
    Tensor filters = rand_t({width * dim, n_filters}, 0.6, 8);
    Tensor b = rand_t({n_filters}, 0.3, 9);
    auto pooled = neural::conv_maxpool(sent, filters, b, width);

    for (std::size_t f = 0; f < n_filters; ++f) {
        double best = 0.0;
        std::size_t best_pos = 0;
        bool any = false;
        for (std::size_t w = 0; w + width <= len; ++w) {
            double acc = b[f];
            for (std::size_t r = 0; r < width; ++r) {
                for (std::size_t k = 0; k < dim; ++k) {
                    acc += sent.at(w + r, k) * filters.at(r * dim + k, f);
                }
            }
            acc = std::max(acc, 0.0);
            CHECK(pooled.feature_map.at(w, f) == doctest::Approx(acc).epsilon(1e-12));
            if (!any || acc > best) {
                best = acc;
                best_pos = w;
                any = true;
            }
        }
        CHECK(pooled.pooled[f] == doctest::Approx(best).epsilon(1e-12));
        if (best > 0.0) CHECK(pooled.argmax[f] == best_pos);
    }

    CHECK_THROWS_AS(neural::conv_maxpool(Tensor::zeros({2, 5}), filters, b, 3), ModelError);
    CHECK_THROWS_AS(neural::conv_maxpool(sent, Tensor::zeros({7, 2}), Tensor::zeros({2}), 3),
                    ModelError);
}

TEST_CASE("parameter count matches the closed form") {
    auto toy = testsup::make_keyword_toy(2, 1, 4, 6);
    const std::size_t d = 4;
    const std::size_t units = 3;
    const std::size_t classes = 10;

    auto config = toy_config(neural::Architecture::kLstm, 1);
    config.lstm_units = units;
    auto model = neural::build_model(config, toy.vocab, toy.table, 6, classes);
    std::size_t gates = 4 * (d * units + units * units + units);
    std::size_t peep = 3 * units;
    std::size_t head = units * classes + classes;
    CHECK(neural::parameter_count(model) == gates + peep + head);

    auto bi = toy_config(neural::Architecture::kBiLstm, 1);
    bi.lstm_units = units;
    auto bimodel = neural::build_model(bi, toy.vocab, toy.table, 6, classes);
    CHECK(neural::parameter_count(bimodel) == 2 * (gates + peep) + head);

    auto np = config;
    np.peepholes = false;
    auto nopeep = neural::build_model(np, toy.vocab, toy.table, 6, classes);
    CHECK(neural::parameter_count(nopeep) == gates + head);

    auto cnn = toy_config(neural::Architecture::kCnn, 1);
    auto cnnmodel = neural::build_model(cnn, toy.vocab, toy.table, 6, classes);
    std::size_t conv = 0;
    for (std::size_t w : cnn.cnn.filter_widths) {
        conv += w * d * cnn.cnn.filters_per_width + cnn.cnn.filters_per_width;
    }
    std::size_t total_filters = cnn.cnn.filter_widths.size() * cnn.cnn.filters_per_width;
    CHECK(neural::parameter_count(cnnmodel) == conv + total_filters * classes + classes);
}

TEST_CASE("build_model validates its configuration") {
    auto toy = testsup::make_keyword_toy(2, 1, 4, 6);
    auto config = toy_config(neural::Architecture::kLstm, 1);
    CHECK_THROWS_AS(neural::build_model(config, toy.vocab, toy.table, 0, 10), ModelError);

    auto wide = toy_config(neural::Architecture::kCnn, 1);
    wide.cnn.filter_widths = {9};
    CHECK_THROWS_AS(neural::build_model(wide, toy.vocab, toy.table, 6, 10), ModelError);

    auto blockless = toy_config(neural::Architecture::kLstm, 1);
    blockless.lstm_blocks = 0;
    CHECK_THROWS_AS(neural::build_model(blockless, toy.vocab, toy.table, 6, 10), ModelError);

    emb::EmbeddingTable wrong;
    wrong.dimension = 4;
    wrong.vectors = Tensor::zeros({3, 4});
    CHECK_THROWS_AS(neural::build_model(config, toy.vocab, wrong, 6, 10), ModelError);
}

TEST_CASE("zeroed softmax head predicts the uniform distribution") {
    auto toy = testsup::make_keyword_toy(2, 3, 4, 6);
    for (auto arch : {neural::Architecture::kCnn, neural::Architecture::kLstm,
                      neural::Architecture::kBiLstm, neural::Architecture::kCnnLstm}) {
        auto config = toy_config(arch, 5);
        config.cnn.filter_widths = {2, 3};
        auto model = neural::build_model(config, toy.vocab, toy.table, toy.max_len, 10);
        model.params.at("head.w").fill(0.0);
        model.params.at("head.b").fill(0.0);
        auto proba = neural::predict(model, toy.sequences[0]);
        REQUIRE(proba.size() == 10);
        double total = 0.0;
        for (double p : proba) {
            CHECK(p == doctest::Approx(0.1).epsilon(1e-12));
            total += p;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("gradients flow correctly through every architecture") {
    auto toy = testsup::make_keyword_toy(2, 7, 4, 6);
    std::vector<features::EncodedSequence> batch = {toy.sequences[0], toy.sequences[2],
                                                    toy.sequences[4]};
    Tensor onehot = Tensor::zeros({3, 10});
    onehot.at(0, 0) = 1.0;
    onehot.at(1, 1) = 1.0;
    onehot.at(2, 2) = 1.0;

    for (auto arch : {neural::Architecture::kLstm, neural::Architecture::kBiLstm,
                      neural::Architecture::kCnn, neural::Architecture::kCnnLstm}) {
        auto config = toy_config(arch, 11);
        config.lstm_units = 3;
        config.cnn.filters_per_width = 2;
        auto model = neural::build_model(config, toy.vocab, toy.table, toy.max_len, 10);
        double worst = model_gradcheck(model, batch, onehot, 30, 17);
        INFO("architecture ", neural::architecture_name(arch));
        CHECK(worst < 1e-4);
    }

    // Two stacked blocks exercise the inter-block wiring.
    auto deep = toy_config(neural::Architecture::kLstm, 13);
    deep.lstm_units = 3;
    deep.lstm_blocks = 2;
    auto model = neural::build_model(deep, toy.vocab, toy.table, toy.max_len, 10);
    CHECK(model_gradcheck(model, batch, onehot, 30, 19) < 1e-4);
}

TEST_CASE("bilstm with zeroed backward weights degenerates to the forward lstm") {
    auto toy = testsup::make_keyword_toy(2, 9, 4, 6);
    auto bi_config = toy_config(neural::Architecture::kBiLstm, 21);
    bi_config.lstm_units = 4;
    auto bi = neural::build_model(bi_config, toy.vocab, toy.table, toy.max_len, 10);
    for (auto& [name, tensor] : bi.params) {
        if (name.rfind("bwd0.", 0) == 0) tensor.fill(0.0);
    }

    auto finals = neural::bilstm_final_outputs(bi, toy.sequences[1]);
    for (std::size_t i = 0; i < finals.backward_final.size(); ++i) {
        CHECK(finals.backward_final[i] == 0.0);
    }

    auto lstm_config = toy_config(neural::Architecture::kLstm, 22);
    lstm_config.lstm_units = 4;
    auto lstm = neural::build_model(lstm_config, toy.vocab, toy.table, toy.max_len, 10);
    for (auto& [name, tensor] : lstm.params) {
        if (name.rfind("lstm0.", 0) == 0) {
            tensor = bi.params.at("fwd0." + name.substr(6));
        } else {
            tensor = bi.params.at(name);
        }
    }

    auto from_bi = neural::predict(bi, toy.sequences[1]);
    auto from_lstm = neural::predict(lstm, toy.sequences[1]);
    REQUIRE(from_bi.size() == from_lstm.size());
    for (std::size_t c = 0; c < from_bi.size(); ++c) {
        CHECK(from_bi[c] == doctest::Approx(from_lstm[c]).epsilon(1e-15));
    }

    CHECK_THROWS_AS(neural::bilstm_final_outputs(lstm, toy.sequences[1]), ModelError);
}

TEST_CASE("bilstm with mirrored weights treats a palindrome symmetrically") {
    auto toy = testsup::make_keyword_toy(2, 9, 4, 5);
    auto config = toy_config(neural::Architecture::kBiLstm, 23);
    config.lstm_units = 4;
    auto model = neural::build_model(config, toy.vocab, toy.table, 5, 10);
    for (auto& [name, tensor] : model.params) {
        if (name.rfind("bwd0.", 0) == 0) {
            tensor = model.params.at("fwd0." + name.substr(5));
        }
    }

    features::EncodedSequence palindrome;
    palindrome.indices = {2, 3, 4, 3, 2};
    palindrome.true_length = 5;

    auto finals = neural::bilstm_final_outputs(model, palindrome);
    for (std::size_t i = 0; i < finals.forward_final.size(); ++i) {
        CHECK(finals.forward_final[i] ==
              doctest::Approx(finals.backward_final[i]).epsilon(1e-12));
    }
}

TEST_CASE("cnnlstm feeds L-w+1 windows to the recurrent stack") {
    auto toy = testsup::make_keyword_toy(2, 9, 4, 8);
    auto config = toy_config(neural::Architecture::kCnnLstm, 25);
    config.cnn.filter_widths = {3};
    config.cnn.filters_per_width = 2;
    config.lstm_units = 3;
    auto model = neural::build_model(config, toy.vocab, toy.table, 8, 10);

    nd::Tape tape;
    auto graph = neural::build_forward(tape, model, {toy.sequences[0]}, false, nullptr);
    CHECK(graph.n_windows == 6);
}

TEST_CASE("every architecture learns the keyword toy problem") {
    auto toy = testsup::make_keyword_toy(20, 31, 16, 12);
    for (auto arch : {neural::Architecture::kCnn, neural::Architecture::kLstm,
                      neural::Architecture::kBiLstm, neural::Architecture::kCnnLstm}) {
        auto config = toy_config(arch, 33);
        auto model = neural::build_model(config, toy.vocab, toy.table, toy.max_len, 3);
        auto result = neural::train_model(model, toy.sequences, toy.labels);
        CHECK(result.epoch_losses.size() >= 1);

        auto proba = neural::predict_batch(model, toy.sequences);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < proba.size(); ++i) {
            std::size_t argmax = static_cast<std::size_t>(
                std::max_element(proba[i].begin(), proba[i].end()) - proba[i].begin());
            if (argmax == toy.labels[i]) ++correct;
            double total = 0.0;
            for (double p : proba[i]) total += p;
            CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
        }
        double acc = static_cast<double>(correct) / static_cast<double>(proba.size());
        INFO("architecture ", neural::architecture_name(arch));
        CHECK(acc >= 0.95);
    }
}

TEST_CASE("training is deterministic per seed") {
    auto toy = testsup::make_keyword_toy(8, 37, 8, 10);
    auto config = toy_config(neural::Architecture::kLstm, 39);
    config.epochs = 6;
    config.recurrent_dropout = 0.3;

    auto one = neural::build_model(config, toy.vocab, toy.table, toy.max_len, 3);
    auto r1 = neural::train_model(one, toy.sequences, toy.labels);
    auto two = neural::build_model(config, toy.vocab, toy.table, toy.max_len, 3);
    auto r2 = neural::train_model(two, toy.sequences, toy.labels);

    CHECK(r1.epoch_losses == r2.epoch_losses);
    for (const auto& [name, tensor] : one.params) {
        CHECK(tensor == two.params.at(name));
    }
}

TEST_CASE("full-batch descent on a frozen body drives the head loss down") {
    auto toy = testsup::make_keyword_toy(8, 41, 8, 10);
    auto config = toy_config(neural::Architecture::kLstm, 43);
    config.freeze_body = true;
    config.optimizer = nd::OptimizerKind::kSgd;
    config.batch_size = 0;  // full batch
    config.epochs = 25;
    config.patience = 25;
    config.min_improvement = 1e-9;

    auto model = neural::build_model(config, toy.vocab, toy.table, toy.max_len, 3);
    auto result = neural::train_model(model, toy.sequences, toy.labels);
    REQUIRE(result.epoch_losses.size() >= 2);
    for (std::size_t e = 1; e < result.epoch_losses.size(); ++e) {
        CHECK(result.epoch_losses[e] <= result.epoch_losses[e - 1] + 1e-9);
    }
}

TEST_CASE("inference ignores dropout settings") {
    auto toy = testsup::make_keyword_toy(4, 47, 8, 10);
    auto config = toy_config(neural::Architecture::kLstm, 49);
    auto model = neural::build_model(config, toy.vocab, toy.table, toy.max_len, 3);
    auto baseline = neural::predict(model, toy.sequences[0]);

    model.config.embedding_dropout = 0.5;
    model.config.input_dropout = 0.5;
    model.config.recurrent_dropout = 0.5;
    auto with_dropout = neural::predict(model, toy.sequences[0]);
    CHECK(baseline == with_dropout);
}

TEST_CASE("train_model validates its inputs") {
    auto toy = testsup::make_keyword_toy(2, 51, 8, 10);
    auto config = toy_config(neural::Architecture::kLstm, 53);
    auto model = neural::build_model(config, toy.vocab, toy.table, toy.max_len, 3);

    CHECK_THROWS_AS(neural::train_model(model, {}, {}), DataError);
    CHECK_THROWS_AS(neural::train_model(model, toy.sequences,
                                        std::vector<std::size_t>(toy.sequences.size(), 7)),
                    DataError);

    features::EncodedSequence wrong;
    wrong.indices = {2, 3};
    wrong.true_length = 2;
    CHECK_THROWS_AS(neural::predict(model, wrong), ModelError);
}

TEST_CASE("unigram trace credits the token behind the winning window") {
    auto vocab = features::Vocabulary::from_tokens(
        {features::Vocabulary::kPadToken, features::Vocabulary::kUnkToken, "track", "noise"});
    emb::EmbeddingTable table;
    table.dimension = 2;
    table.vectors = Tensor::zeros({4, 2});
    table.vectors.at(2, 0) = 1.0;   // track
    table.vectors.at(3, 1) = 0.2;   // noise

    neural::ModelConfig config;
    config.architecture = neural::Architecture::kCnn;
    config.cnn.filter_widths = {1};
    config.cnn.filters_per_width = 1;
    config.cnn.dropout_rate = 0.0;
    config.seed = 3;
    auto model = neural::build_model(config, vocab, table, 6, 10);

    model.params.at("conv1.w") = Tensor({2, 1}, {5.0, 0.0});
    model.params.at("conv1.b") = Tensor::zeros({1});
    Tensor head = Tensor::zeros({1, 10});
    head.at(0, 0) = 3.0;
    model.params.at("head.w") = head;
    model.params.at("head.b") = Tensor::zeros({10});

    std::vector<features::EncodedSequence> seqs;
    for (int i = 0; i < 3; ++i) {
        features::EncodedSequence seq;
        seq.indices = {3, 3, 2, 3, 0, 0};
        seq.true_length = 4;
        seqs.push_back(seq);
    }

    auto credits = neural::trace_unigram_importance(model, seqs, 0, 5);
    REQUIRE(!credits.empty());
    CHECK(credits[0].token == "track");
    CHECK(credits[0].credit == doctest::Approx(45.0).epsilon(1e-9));
    for (const auto& c : credits) CHECK(c.token != "noise");

    auto lstm_config = toy_config(neural::Architecture::kLstm, 55);
    auto toy = testsup::make_keyword_toy(2, 57, 8, 10);
    auto lstm = neural::build_model(lstm_config, toy.vocab, toy.table, toy.max_len, 3);
    CHECK_THROWS_AS(neural::trace_unigram_importance(lstm, seqs, 0, 5), ModelError);
}

TEST_CASE("neural model artifacts round-trip") {
    auto toy = testsup::make_keyword_toy(6, 61, 8, 10);
    auto config = toy_config(neural::Architecture::kBiLstm, 63);
    config.epochs = 3;
    auto model = neural::build_model(config, toy.vocab, toy.table, toy.max_len, 3);
    neural::train_model(model, toy.sequences, toy.labels);

    testsup::TmpDir dir;
    neural::save_model(model, dir.file("model.json"));
    auto loaded = neural::load_model(dir.file("model.json"));

    CHECK(loaded.architecture == model.architecture);
    CHECK(loaded.n_classes == model.n_classes);
    CHECK(loaded.max_sequence_length == model.max_sequence_length);
    CHECK(loaded.vocab.tokens() == model.vocab.tokens());
    CHECK(loaded.embeddings.dimension == model.embeddings.dimension);
    CHECK(loaded.embeddings.vectors == model.embeddings.vectors);
    CHECK(loaded.config.lstm_units == model.config.lstm_units);
    CHECK(loaded.config.recurrent_dropout == model.config.recurrent_dropout);
    for (const auto& [name, tensor] : model.params) {
        CHECK(tensor == loaded.params.at(name));
    }
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(neural::predict(model, toy.sequences[i]) ==
              neural::predict(loaded, toy.sequences[i]));
    }

    CHECK_THROWS_AS(neural::load_model(dir.file("missing.json")), DataError);
}

namespace {

class FakeClassifier : public coverage::SegmentClassifier {
public:
    std::vector<double> classify(const std::string& text) const override {
        std::vector<double> probs(kNumPractices, 0.02);
        if (text.find("security") != std::string::npos) {
            probs[practice_index(DataPractice::kDataSecurity)] = 0.8;
        } else if (text.find("email") != std::string::npos) {
            probs[practice_index(DataPractice::kFirstPartyCollectionUse)] = 0.8;
        } else if (text.find("tie") != std::string::npos) {
            probs[0] = 0.4;
            probs[1] = 0.4;
        } else {
            probs[practice_index(DataPractice::kOther)] = 0.8;
        }
        double total = 0.0;
        for (double p : probs) total += p;
        for (double& p : probs) p /= total;
        return probs;
    }
    std::string kind() const override { return "fake"; }
};

class BrokenClassifier : public coverage::SegmentClassifier {
public:
    std::vector<double> classify(const std::string&) const override {
        return std::vector<double>(7, 0.1);
    }
    std::string kind() const override { return "broken"; }
};

}  // namespace

TEST_CASE("analyze_policy partitions practices into covered and missing") {
    FakeClassifier fake;
    auto report = coverage::analyze_policy(
        "example.com", {"we value security", "give us your email", "we sell hats"}, fake);

    CHECK(report.policy_id == "example.com");
    REQUIRE(report.segments.size() == 3);
    CHECK(report.segments[0].predicted == DataPractice::kDataSecurity);
    CHECK(report.segments[1].predicted == DataPractice::kFirstPartyCollectionUse);
    CHECK(report.segments[2].predicted == DataPractice::kOther);
    CHECK(report.segments[0].confidence > 0.5);

    CHECK(report.covered.size() == 3);
    CHECK(report.missing.size() == 7);
    std::set<DataPractice> all;
    all.insert(report.covered.begin(), report.covered.end());
    all.insert(report.missing.begin(), report.missing.end());
    CHECK(all.size() == kNumPractices);

    std::size_t listed = 0;
    for (const auto& ids : report.practice_segments) listed += ids.size();
    CHECK(listed == report.segments.size());

    // Tie goes to the lowest class index.
    auto tied = coverage::analyze_policy("tie.com", {"a tie segment"}, fake);
    CHECK(tied.segments[0].predicted == DataPractice::kFirstPartyCollectionUse);

    CHECK_THROWS_AS(coverage::analyze_policy("none.com", {}, fake), DataError);
    BrokenClassifier broken;
    CHECK_THROWS_AS(coverage::analyze_policy("b.com", {"text"}, broken), ModelError);
}

TEST_CASE("coverage reports render and parse losslessly") {
    FakeClassifier fake;
    auto report = coverage::analyze_policy(
        "shop.example", {"we value security", "plain segment", "email please"}, fake);

    std::string json_text = coverage::render_report_json(report);
    auto parsed = coverage::parse_report_json(json_text);
    CHECK(parsed == report);
    CHECK(coverage::render_report_json(parsed) == json_text);

    std::string text = coverage::render_report_text(report);
    CHECK(text.find("shop.example") != std::string::npos);
    CHECK(text.find("Covered practices") != std::string::npos);
    CHECK(text.find("Missing practices") != std::string::npos);
    for (DataPractice p : report.covered) {
        CHECK(text.find(std::string(practice_name(p))) != std::string::npos);
    }

    CHECK_THROWS_AS(coverage::parse_report_json("{\"what\":1}"), DataError);
}

TEST_CASE("segment_text splits on blank lines") {
    auto blocks = coverage::segment_text("para one\n\npara two\r\n\r\npara three\n");
    REQUIRE(blocks.size() == 3);
    CHECK(blocks[0] == "para one");
    CHECK(blocks[1] == "para two");
    CHECK(blocks[2] == "para three");

    auto spaced = coverage::segment_text("first\n\n   \n\nsecond");
    REQUIRE(spaced.size() == 2);
    CHECK(spaced[1] == "second");

    CHECK(coverage::segment_text("").empty());
    CHECK(coverage::segment_text("  \n \n  ").empty());

    auto joined = coverage::segment_text("line a\nline b\n\nnext");
    REQUIRE(joined.size() == 2);
    CHECK(joined[0].find("line a") != std::string::npos);
    CHECK(joined[0].find("line b") != std::string::npos);
}

TEST_CASE("classifier wrappers dispatch on artifact contents") {
    testsup::SyntheticSpec spec;
    spec.n_policies = 15;
    auto ds = testsup::make_corpus(spec);

    std::vector<std::vector<std::string>> docs;
    std::vector<std::size_t> labels;
    for (const auto& s : ds.segments) {
        docs.push_back(features::tokenize(s.text));
        labels.push_back(static_cast<std::size_t>(practice_index(s.label)));
    }
    auto tfidf = features::fit_tfidf(docs);
    std::vector<features::FeatureVector> rows;
    for (const auto& d : docs) rows.push_back(features::count_vector(tfidf, d));

    classical::ClassicalModel mnb;
    mnb.model = classical::train_mnb(rows, labels, kNumPractices, tfidf.vocab_size());
    mnb.tfidf = tfidf;
    mnb.n_classes = kNumPractices;

    testsup::TmpDir dir;
    classical::save_classical_model(mnb, dir.file("mnb.json"));
    auto classifier = coverage::load_classifier(dir.file("mnb.json"));
    CHECK(classifier->kind() == "mnb");
    auto probs = classifier->classify(ds.segments[0].text);
    REQUIRE(probs.size() == kNumPractices);
    double total = 0.0;
    for (double p : probs) total += p;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));

    auto report = coverage::analyze_policy("p", {ds.segments[0].text}, *classifier);
    CHECK(report.segments.size() == 1);

    auto toy = testsup::make_keyword_toy(2, 71, 8, 10);
    auto config = toy_config(neural::Architecture::kLstm, 73);
    auto model = neural::build_model(config, toy.vocab, toy.table, toy.max_len, 3);
    neural::save_model(model, dir.file("lstm.json"));
    auto nclassifier = coverage::load_classifier(dir.file("lstm.json"));
    CHECK(nclassifier->kind() == "lstm");
    auto nprobs = nclassifier->classify("one two three");
    CHECK(nprobs.size() == 3);

    {
        std::ofstream out(dir.file("junk.json"));
        out << "{\"neither\": true}";
    }
    CHECK_THROWS_AS(coverage::load_classifier(dir.file("junk.json")), DataError);

    auto direct = coverage::make_classifier(std::move(mnb));
    CHECK(direct->kind() == "mnb");
}
