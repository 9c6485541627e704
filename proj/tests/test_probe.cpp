#include <cmath>
#include <filesystem>

#include "contrawr/probe.hpp"
#include "contrawr/rng.hpp"
#include "contrawr/synthetic.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace contrawr;

namespace {

EncoderConfig probe_encoder_config() {
  EncoderConfig config;
  config.in_channels = 2;  // 1 signal channel -> amp + phase
  config.in_bins = 65;
  config.in_frames = 7;
  config.widths = {4, 6, 8};
  config.pool_bins = 2;
  config.pool_frames = 1;
  return config;
}

// Band-power features on the raw signal; shares nothing with the encoder.
EmbeddingSet band_power_embeddings(const Dataset& data) {
  EmbeddingSet set;
  for (const Epoch& e : data.epochs) {
    std::vector<double> features;
    for (std::size_t c = 0; c < e.n_channels; ++c) {
      std::vector<double> signal(e.channel(c), e.channel(c) + e.n_samples);
      for (const auto& band : kSyntheticBands) {
        features.push_back(std::log(1e-12 + oracle::band_power(signal, e.sample_rate_hz,
                                                               band[0], band[1])));
      }
    }
    set.embeddings.push_back(std::move(features));
    set.labels.push_back(*e.label);
    set.subject_ids.push_back(e.subject_id);
  }
  return set;
}

}  // namespace

TEST_CASE("embed is deterministic with one row of width d per epoch") {
  auto config = probe_encoder_config();
  Encoder<float> encoder(config, 31);
  auto data = generate_synthetic_dataset(3, 4, 1, 512, 100.0f, 9);
  StftConfig stft{128, 64, false};

  auto set = embed(encoder, data.epochs, stft);
  CHECK(set.size() == data.epochs.size());
  CHECK(set.dim() == config.latent_dim());

  std::vector<Epoch> twice = {data.epochs[0], data.epochs[0]};
  auto pair = embed(encoder, twice, stft);
  CHECK(pair.embeddings[0] == pair.embeddings[1]);

  // Batch boundaries must not alter rows (batchnorm runs on frozen stats).
  auto small_batches = embed(encoder, data.epochs, stft, 2);
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (std::size_t j = 0; j < set.dim(); ++j) {
      CHECK(small_batches.embeddings[i][j] == doctest::Approx(set.embeddings[i][j]));
    }
  }
}

TEST_CASE("embedding epochs without labels is rejected") {
  auto config = probe_encoder_config();
  Encoder<float> encoder(config, 1);
  auto data = generate_synthetic_dataset(3, 2, 1, 512, 100.0f, 9);
  data.epochs[0].label.reset();
  CHECK_THROWS_AS(embed(encoder, data.epochs, StftConfig{128, 64, false}),
                  degenerate_data_error);
}

TEST_CASE("probing leaves the encoder untouched") {
  auto config = probe_encoder_config();
  Encoder<float> encoder(config, 42);
  auto data = generate_synthetic_dataset(4, 10, 1, 512, 100.0f, 10);
  StftConfig stft{128, 64, false};

  std::vector<std::vector<float>> before;
  for (Param<float>* p : encoder.params()) before.push_back(p->value);

  auto set = embed(encoder, data.epochs, stft);
  auto standardizer = Standardizer::fit(set);
  auto model = fit_logistic(standardizer.apply(set), 100, 1.0);
  evaluate(model, standardizer.apply(set));

  auto after = encoder.params();
  for (std::size_t i = 0; i < after.size(); ++i) CHECK(after[i]->value == before[i]);
}

TEST_CASE("fit_logistic separates a linearly separable two-class set") {
  Rng rng = make_rng(50);
  EmbeddingSet set;
  for (int i = 0; i < 40; ++i) {
    const bool wake = i % 2 == 0;
    std::vector<double> x = {uniform_real(rng, -1.0, 1.0), uniform_real(rng, -1.0, 1.0)};
    x[0] += wake ? 3.0 : -3.0;  // wide margin on the first coordinate
    set.embeddings.push_back(x);
    set.labels.push_back(wake ? Stage::W : Stage::N3);
    set.subject_ids.push_back("s");
  }
  auto model = fit_logistic(set, 500, 0.0);
  auto eval = evaluate(model, set);
  CHECK(eval.accuracy == 1.0);
}

TEST_CASE("fit_logistic on identical embeddings predicts the majority class") {
  EmbeddingSet set;
  for (int i = 0; i < 30; ++i) {
    set.embeddings.push_back({1.0, -2.0, 0.5});
    set.labels.push_back(i < 18 ? Stage::N2 : Stage::R);  // 60% N2
    set.subject_ids.push_back("s");
  }
  auto model = fit_logistic(set, 300, 0.0);
  auto eval = evaluate(model, set);
  CHECK(model.predict(set.embeddings[0]) == Stage::N2);
  CHECK(eval.accuracy == doctest::Approx(0.6));
}

TEST_CASE("fit_logistic objective trace is monotone nonincreasing") {
  Rng rng = make_rng(51);
  EmbeddingSet set;
  for (int i = 0; i < 60; ++i) {
    std::vector<double> x(4);
    for (double& v : x) v = normal(rng);
    const int label = static_cast<int>(uniform_index(rng, 5));
    x[0] += label;  // weak signal
    set.embeddings.push_back(x);
    set.labels.push_back(static_cast<Stage>(label));
    set.subject_ids.push_back("s");
  }
  std::vector<double> trace;
  fit_logistic(set, 200, 0.5, &trace);
  REQUIRE(trace.size() >= 2);
  for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-12);
}

TEST_CASE("fit_logistic input validation") {
  EmbeddingSet tiny;
  for (int i = 0; i < 5; ++i) {
    tiny.embeddings.push_back({1.0});
    tiny.labels.push_back(Stage::W);
    tiny.subject_ids.push_back("s");
  }
  CHECK_THROWS_AS(fit_logistic(tiny, 10, 1.0), degenerate_data_error);  // n < 10

  EmbeddingSet single;
  for (int i = 0; i < 20; ++i) {
    single.embeddings.push_back({static_cast<double>(i)});
    single.labels.push_back(Stage::N1);
    single.subject_ids.push_back("s");
  }
  CHECK_THROWS_AS(fit_logistic(single, 10, 1.0), degenerate_data_error);  // one class
}

TEST_CASE("evaluate counts the confusion matrix exactly") {
  SUBCASE("perfect predictions give an identity-patterned confusion") {
    EmbeddingSet set;
    ProbeModel model;
    model.weights.assign(kNumStages, std::vector<double>(kNumStages, 0.0));
    for (int k = 0; k < kNumStages; ++k) model.weights[k][k] = 10.0;
    for (int i = 0; i < 25; ++i) {
      std::vector<double> x(kNumStages, 0.0);
      x[i % kNumStages] = 1.0;
      set.embeddings.push_back(x);
      set.labels.push_back(static_cast<Stage>(i % kNumStages));
      set.subject_ids.push_back("s");
    }
    auto eval = evaluate(model, set);
    CHECK(eval.accuracy == 1.0);
    for (int t = 0; t < kNumStages; ++t) {
      for (int p = 0; p < kNumStages; ++p) {
        CHECK(eval.confusion[t][p] == (t == p ? 5u : 0u));
      }
    }
  }
  SUBCASE("row sums equal per-class true counts; accuracy is trace over total") {
    // Hand-built 10-sample case: model always predicts W.
    ProbeModel model;
    model.weights.assign(kNumStages, std::vector<double>(1, 0.0));
    model.biases = {5.0, 0.0, 0.0, 0.0, 0.0};
    EmbeddingSet set;
    const Stage truths[10] = {Stage::W,  Stage::W,  Stage::N1, Stage::N2, Stage::N2,
                              Stage::N3, Stage::N3, Stage::N3, Stage::R,  Stage::R};
    for (Stage t : truths) {
      set.embeddings.push_back({0.0});
      set.labels.push_back(t);
      set.subject_ids.push_back("s");
    }
    auto eval = evaluate(model, set);
    CHECK(eval.accuracy == doctest::Approx(0.2));  // trace 2 of 10
    std::size_t expected_rows[kNumStages] = {2, 1, 2, 3, 2};
    for (int t = 0; t < kNumStages; ++t) {
      std::size_t row = 0;
      for (int p = 0; p < kNumStages; ++p) row += eval.confusion[t][p];
      CHECK(row == expected_rows[t]);
    }
  }
}

TEST_CASE("softmax predictions sum to one") {
  ProbeModel model;
  model.weights.assign(kNumStages, std::vector<double>(3, 0.3));
  model.biases = {0.1, -0.2, 0.4, 0.0, -0.5};
  const auto proba = model.predict_proba({1.0, -2.0, 0.7});
  double total = 0.0;
  for (double p : proba) total += p;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("embedding export round-trips through csv") {
  Rng rng = make_rng(52);
  EmbeddingSet set;
  for (int i = 0; i < 12; ++i) {
    std::vector<double> x(6);
    for (double& v : x) v = normal(rng) * std::pow(10.0, static_cast<double>(i % 5) - 2.0);
    set.embeddings.push_back(x);
    set.labels.push_back(static_cast<Stage>(i % kNumStages));
    set.subject_ids.push_back("S" + std::to_string(i / 4));
  }
  const auto path = (std::filesystem::temp_directory_path() / "contrawr_embed.csv").string();
  export_embeddings(set, path);

  // n rows + 1 header.
  std::ifstream in(path);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 13);
  in.close();

  auto loaded = import_embeddings(path);
  REQUIRE(loaded.size() == set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    CHECK(loaded.subject_ids[i] == set.subject_ids[i]);
    CHECK(loaded.labels[i] == set.labels[i]);
    for (std::size_t j = 0; j < set.dim(); ++j) {
      CHECK(loaded.embeddings[i][j] ==
            doctest::Approx(set.embeddings[i][j]).epsilon(1e-9));
    }
  }
  std::filesystem::remove(path);
}

TEST_CASE("synthetic classes are probe-separable from band powers alone") {
  // Oracle for the generator, independent of the encoder: a logistic probe
  // on raw FFT band powers must reach 90% on held-out subjects.
  auto data = generate_synthetic_dataset(10, 15, 1, 1024, 100.0f, 77);
  auto features = band_power_embeddings(data);

  EmbeddingSet train, test;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const bool holdout = features.subject_ids[i] >= "S007";
    auto& dst = holdout ? test : train;
    dst.embeddings.push_back(features.embeddings[i]);
    dst.labels.push_back(features.labels[i]);
    dst.subject_ids.push_back(features.subject_ids[i]);
  }
  auto standardizer = Standardizer::fit(train);
  auto model = fit_logistic(standardizer.apply(train), 500, 1.0);
  auto eval = evaluate(model, standardizer.apply(test));
  INFO("band-power probe accuracy " << eval.accuracy);
  CHECK(eval.accuracy >= 0.9);
}

TEST_CASE("untrained encoder embeddings still probe above chance") {
  auto data = generate_synthetic_dataset(6, 15, 1, 512, 100.0f, 3);
  auto config = probe_encoder_config();
  Encoder<float> encoder(config, 1234);  // never trained
  StftConfig stft{128, 64, false};

  EmbeddingSet train, test;
  auto all = embed(encoder, data.epochs, stft);
  for (std::size_t i = 0; i < all.size(); ++i) {
    const bool holdout = all.subject_ids[i] >= "S004";
    auto& dst = holdout ? test : train;
    dst.embeddings.push_back(all.embeddings[i]);
    dst.labels.push_back(all.labels[i]);
    dst.subject_ids.push_back(all.subject_ids[i]);
  }
  auto standardizer = Standardizer::fit(train);
  auto model = fit_logistic(standardizer.apply(train), 500, 1.0);
  auto eval = evaluate(model, standardizer.apply(test));
  INFO("untrained probe accuracy " << eval.accuracy);
  CHECK(eval.accuracy > 0.2);
}
