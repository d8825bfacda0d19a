#include <catch2/catch_amalgamated.hpp>

#include "bnn/model.hpp"

using namespace bnn;

namespace {

const char* kCase1Json = R"({
  "input-width": 1,
  "head": {"kind": "gaussian"},
  "layers": [
    {"kind": "dense-variational", "units": 8, "activation": "sigmoid"},
    {"kind": "dense-variational", "units": 8, "activation": "sigmoid"},
    {"kind": "dense", "units": 2, "activation": "identity"}
  ]
})";

const char* kCase2Json = R"({
  "input-width": 1,
  "head": {"kind": "gaussian"},
  "layers": [
    {"kind": "dense", "units": 8, "activation": "sigmoid"},
    {"kind": "dense", "units": 8, "activation": "sigmoid"},
    {"kind": "dense-variational", "units": 2, "activation": "identity"}
  ]
})";

ModelSpec all_dense_spec(std::size_t layers_n) {
    ModelSpec spec;
    spec.input_width = 2;
    for (std::size_t i = 0; i < layers_n; ++i) {
        LayerSpec l;
        l.kind = LayerSpec::Kind::dense;
        l.units = i + 1 == layers_n ? 2 : 4;
        l.activation = i + 1 == layers_n ? Activation::identity : Activation::sigmoid;
        spec.layers.push_back(l);
    }
    spec.head.kind = HeadKind::gaussian;
    return spec;
}

}  // namespace

TEST_CASE("reference case topologies build as specified") {
    SECTION("case 1: two probabilistic hidden layers, deterministic output") {
        Model m = build_model(parse_model_spec(std::string(kCase1Json)), 1);
        REQUIRE(m.layers.size() == 3);
        CHECK(std::holds_alternative<DenseVariational>(m.layers[0]));
        CHECK(std::holds_alternative<DenseVariational>(m.layers[1]));
        CHECK(std::holds_alternative<DenseDeterministic>(m.layers[2]));
        CHECK(m.output_width() == 2);
    }
    SECTION("case 2: two deterministic hidden layers, probabilistic output") {
        Model m = build_model(parse_model_spec(std::string(kCase2Json)), 1);
        REQUIRE(m.layers.size() == 3);
        CHECK(std::holds_alternative<DenseDeterministic>(m.layers[0]));
        CHECK(std::holds_alternative<DenseDeterministic>(m.layers[1]));
        CHECK(std::holds_alternative<DenseVariational>(m.layers[2]));
    }
    SECTION("all-variational spec has exactly twice the all-dense parameter count") {
        ModelSpec dense = all_dense_spec(3);
        ModelSpec variational = dense;
        for (LayerSpec& l : variational.layers) l.kind = LayerSpec::Kind::dense_variational;
        CHECK(build_model(variational, 3).param_count() ==
              2 * build_model(dense, 3).param_count());
    }
}

TEST_CASE("hybrid split") {
    SECTION("case 2 splits as (2, 1)") {
        HybridSplit s = hybrid_split(parse_model_spec(std::string(kCase2Json)));
        CHECK(s.deterministic_depth == 2);
        CHECK(s.probabilistic_depth == 1);
        CHECK(s.canonical);
    }
    SECTION("all-dense splits as (L, 0)") {
        HybridSplit s = hybrid_split(all_dense_spec(4));
        CHECK(s.deterministic_depth == 4);
        CHECK(s.probabilistic_depth == 0);
        CHECK(s.canonical);
    }
    SECTION("variational-first is flagged non-canonical") {
        ModelSpec spec = all_dense_spec(3);
        spec.layers[0].kind = LayerSpec::Kind::dense_variational;
        HybridSplit s = hybrid_split(spec);
        CHECK_FALSE(s.canonical);
        CHECK(s.probabilistic_depth == 1);
        CHECK(s.deterministic_depth == 2);
    }
}

TEST_CASE("spec serialization round-trips idempotently") {
    const std::string once = serialize_model_spec(parse_model_spec(std::string(kCase2Json)));
    const std::string twice = serialize_model_spec(parse_model_spec(once));
    CHECK(once == twice);

    // defaults are materialized: omitted activation becomes sigmoid on hidden
    // layers and identity on the last layer
    ModelSpec defaulted = parse_model_spec(std::string(R"({
      "input-width": 3,
      "head": {"kind": "gaussian"},
      "layers": [
        {"kind": "dense", "units": 4},
        {"kind": "dense-variational", "units": 2}
      ]
    })"));
    CHECK(defaulted.layers[0].activation == Activation::sigmoid);
    CHECK(defaulted.layers[1].activation == Activation::identity);
}

TEST_CASE("build determinism") {
    ModelSpec spec = parse_model_spec(std::string(kCase1Json));
    Model a = build_model(spec, 99);
    Model b = build_model(spec, 99);
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        if (const auto* ad = std::get_if<DenseDeterministic>(&a.layers[i])) {
            const auto& bd = std::get<DenseDeterministic>(b.layers[i]);
            CHECK(ad->weights.data() == bd.weights.data());
            CHECK(ad->bias.data() == bd.bias.data());
        } else {
            const auto& av = std::get<DenseVariational>(a.layers[i]);
            const auto& bv = std::get<DenseVariational>(b.layers[i]);
            CHECK(av.weight_posterior.mu.data() == bv.weight_posterior.mu.data());
            CHECK(av.weight_posterior.rho.data() == bv.weight_posterior.rho.data());
        }
    }
    Model c = build_model(spec, 100);
    const auto& a0 = std::get<DenseVariational>(a.layers[0]);
    const auto& c0 = std::get<DenseVariational>(c.layers[0]);
    CHECK(a0.weight_posterior.mu.data() != c0.weight_posterior.mu.data());
}

TEST_CASE("spec validation errors name the offending layer") {
    SECTION("gaussian head needs final units of 2") {
        ModelSpec spec = all_dense_spec(2);
        spec.layers.back().units = 3;
        CHECK_THROWS_WITH(validate_spec(spec),
                          Catch::Matchers::ContainsSubstring("gaussian head"));
    }
    SECTION("variational fields on a dense layer are rejected") {
        CHECK_THROWS_WITH(parse_model_spec(std::string(R"({
          "input-width": 1,
          "head": {"kind": "gaussian"},
          "layers": [{"kind": "dense", "units": 2, "prior-sigma": 2.0}]
        })")),
                          Catch::Matchers::ContainsSubstring("variational fields"));
    }
    SECTION("radial family with a single-parameter block is a build error") {
        ModelSpec spec;
        spec.input_width = 1;
        spec.head.kind = HeadKind::categorical;
        spec.head.classes = 2;
        LayerSpec l;
        l.kind = LayerSpec::Kind::dense_variational;
        l.units = 1;
        l.family = PosteriorFamily::radial;
        LayerSpec out;
        out.kind = LayerSpec::Kind::dense;
        out.units = 2;
        spec.layers = {l, out};
        CHECK_THROWS_WITH(build_model(spec, 1),
                          Catch::Matchers::ContainsSubstring("radial"));
    }
    SECTION("zero units name the layer index") {
        ModelSpec spec = all_dense_spec(2);
        spec.layers[0].units = 0;
        CHECK_THROWS_WITH(validate_spec(spec), Catch::Matchers::ContainsSubstring("layer 0"));
    }
}

TEST_CASE("shipped spec files are valid and match their advertised topologies") {
    const std::string dir = BNN_SPECS_DIR;
    ModelSpec case1 = load_model_spec(dir + "/case1.json");
    CHECK(case1.layers[0].is_variational());
    CHECK(case1.layers[1].is_variational());
    CHECK_FALSE(case1.layers[2].is_variational());

    ModelSpec case2 = load_model_spec(dir + "/case2.json");
    HybridSplit s2 = hybrid_split(case2);
    CHECK(s2.deterministic_depth == 2);
    CHECK(s2.probabilistic_depth == 1);

    ModelSpec all_var = load_model_spec(dir + "/all-variational.json");
    ModelSpec all_dense = load_model_spec(dir + "/all-dense.json");
    CHECK(hybrid_split(all_var).probabilistic_depth == 3);
    CHECK(hybrid_split(all_dense).probabilistic_depth == 0);
    CHECK(build_model(all_var, 1).param_count() == 2 * build_model(all_dense, 1).param_count());
    for (const auto& spec : {case1, case2, all_var, all_dense})
        CHECK_NOTHROW(build_model(spec, 5));
}

TEST_CASE("checkpoints round-trip parameters exactly") {
    ModelSpec spec = parse_model_spec(std::string(kCase2Json));
    Model m = build_model(spec, 7);
    Checkpoint ck = checkpoint_from_model(m);
    ck.scaling = FeatureScaling{{0.25}, {1.75}};
    ck.target_name = "y";

    const nlohmann::json j = nlohmann::json::parse(to_json(ck).dump());
    Model restored = model_from_checkpoint(checkpoint_from_json(j));

    const auto& v1 = std::get<DenseVariational>(m.layers[2]);
    const auto& v2 = std::get<DenseVariational>(restored.layers[2]);
    CHECK(v1.weight_posterior.mu.data() == v2.weight_posterior.mu.data());
    CHECK(v1.weight_posterior.rho.data() == v2.weight_posterior.rho.data());
    const auto& d1 = std::get<DenseDeterministic>(m.layers[0]);
    const auto& d2 = std::get<DenseDeterministic>(restored.layers[0]);
    CHECK(d1.weights.data() == d2.weights.data());
    CHECK(checkpoint_from_json(j).scaling->mean == std::vector<double>{0.25});
}
