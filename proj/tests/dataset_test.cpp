#include "riskgate/dataset.hpp"

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "riskgate/error.hpp"
#include "synthetic.hpp"
#include "test_files.hpp"

namespace riskgate {
namespace {

using ::testing::HasSubstr;
using testing::make_corpus;
using testing::read_text;
using testing::scratch_dir;
using testing::write_text;

constexpr const char* kTwoRecords =
    R"({"id":"a","benchmark":"piqa","prompt":"How to open a jar?","choices":["twist","freeze"],"gold_index":0,"ambiguous":false,"provenance":"original","source_id":null})"
    "\n"
    R"({"id":"b","benchmark":"piqa","prompt":"How to dry socks?","choices":["sun","soup"],"gold_index":null,"ambiguous":true,"provenance":"rif_nra","source_id":"a","extra":1})"
    "\n";

std::string what_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const InputError& e) {
    return e.what();
  }
  ADD_FAILURE() << "expected InputError";
  return "";
}

TEST(LoadInstances, ReadsRecordsInFileOrder) {
  const auto dir = scratch_dir();
  write_text(dir / "in.jsonl", kTwoRecords);
  const auto instances = load_instances(dir / "in.jsonl");
  ASSERT_EQ(instances.size(), 2u);
  EXPECT_EQ(instances[0].id, "a");
  EXPECT_EQ(instances[0].gold_index, 0);
  EXPECT_FALSE(instances[0].ambiguous);
  EXPECT_EQ(instances[1].id, "b");
  EXPECT_TRUE(instances[1].ambiguous);
  EXPECT_EQ(instances[1].provenance.kind, ProvenanceKind::kRifNra);
  EXPECT_EQ(instances[1].source_id, "a");
}

TEST(LoadInstances, GoldIndexOutOfRangeNamesIdAndField) {
  const auto dir = scratch_dir();
  write_text(dir / "in.jsonl",
             R"({"id":"q7","benchmark":"h","prompt":"p","choices":["a","b","c","d"],"gold_index":5,"ambiguous":false,"provenance":"original","source_id":null})"
             "\n");
  const auto msg = what_of([&] { load_instances(dir / "in.jsonl"); });
  EXPECT_THAT(msg, HasSubstr("q7"));
  EXPECT_THAT(msg, HasSubstr("gold_index"));
}

TEST(LoadInstances, AmbiguousWithGoldIsRejected) {
  const auto dir = scratch_dir();
  write_text(dir / "in.jsonl",
             R"({"id":"x","benchmark":"h","prompt":"p","choices":["a","b"],"gold_index":1,"ambiguous":true,"provenance":"rif_wq","source_id":"y"})"
             "\n");
  EXPECT_THAT(what_of([&] { load_instances(dir / "in.jsonl"); }), HasSubstr("gold_index"));
}

TEST(LoadInstances, MalformedLineReportsLineNumber) {
  const auto dir = scratch_dir();
  write_text(dir / "in.jsonl", std::string(kTwoRecords) + "{not json\n");
  EXPECT_THAT(what_of([&] { load_instances(dir / "in.jsonl"); }), HasSubstr("in.jsonl:3"));
}

TEST(LoadInstances, RejectsDuplicates) {
  const auto dir = scratch_dir();
  auto corpus = make_corpus(3, 1);
  auto dup_id = corpus;
  dup_id[2].id = dup_id[0].id;
  write_instances(dir / "ids.jsonl", dup_id);
  EXPECT_THAT(what_of([&] { load_instances(dir / "ids.jsonl"); }), HasSubstr("duplicate id"));

  auto dup_content = corpus;
  dup_content[2].prompt = dup_content[0].prompt;
  dup_content[2].choices = dup_content[0].choices;
  dup_content[2].gold_index = 0;
  write_instances(dir / "content.jsonl", dup_content);
  EXPECT_THAT(what_of([&] { load_instances(dir / "content.jsonl"); }), HasSubstr("duplicate"));
}

TEST(Validate, InstanceInvariants) {
  Instance base = make_corpus(1, 3).front();
  EXPECT_NO_THROW(validate(base));

  auto one_choice = base;
  one_choice.choices.resize(1);
  one_choice.gold_index = 0;
  EXPECT_THROW(validate(one_choice), InputError);

  auto repeated = base;
  repeated.choices[1] = repeated.choices[0];
  EXPECT_THROW(validate(repeated), InputError);

  auto empty_choice = base;
  empty_choice.choices[1] = "";
  EXPECT_THROW(validate(empty_choice), InputError);

  auto no_gold = base;
  no_gold.gold_index.reset();
  EXPECT_THROW(validate(no_gold), InputError);

  auto orphan = base;
  orphan.provenance = {ProvenanceKind::kRifWq, 0};
  orphan.gold_index.reset();
  orphan.ambiguous = true;
  EXPECT_THROW(validate(orphan), InputError);
  orphan.source_id = orphan.id;
  EXPECT_THROW(validate(orphan), InputError);
  orphan.source_id = "elsewhere";
  EXPECT_NO_THROW(validate(orphan));

  auto original_with_source = base;
  original_with_source.source_id = "z";
  EXPECT_THROW(validate(original_with_source), InputError);
}

TEST(Provenance, ParsesAllForms) {
  for (const auto* text : {"original", "rif_wq", "rif_nra", "overload_random(5)",
                           "overload_heuristic(15)"}) {
    EXPECT_EQ(to_string(parse_provenance(text)), text);
  }
  EXPECT_EQ(parse_provenance("overload_random(10)").n, 10);
  for (const auto* bad : {"", "rif", "overload_random()", "overload_random(x)",
                          "overload_random(5", "overload_heuristic(1)"}) {
    EXPECT_THROW(parse_provenance(bad), InputError) << bad;
  }
}

// Round trip: write_instances then load_instances reproduces every field.
TEST(Instances, WriteLoadRoundTripProperty) {
  const auto dir = scratch_dir();
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    auto corpus = make_corpus(1 + static_cast<int>(rng.below(30)), rng.next(), 2, 6);
    for (auto& inst : corpus) {
      switch (rng.below(4)) {
        case 0:
          break;
        case 1:
          inst.provenance = {ProvenanceKind::kRifNra, 0};
          inst.ambiguous = true;
          inst.gold_index.reset();
          inst.source_id = "src\"" + inst.id;
          break;
        case 2:
          inst.provenance = {ProvenanceKind::kOverloadRandom, static_cast<int>(inst.choices.size())};
          inst.source_id = "ü-" + inst.id;
          break;
        default:
          inst.provenance = {ProvenanceKind::kOverloadHeuristic, 7};
          inst.source_id = inst.id + "#src";
          inst.prompt += " \t\n\\ tail";
      }
    }
    write_instances(dir / "rt.jsonl", corpus);
    EXPECT_EQ(load_instances(dir / "rt.jsonl"), corpus);
  }
}

TEST(Outputs, RoundTripAndValidation) {
  const auto dir = scratch_dir();
  ModelOutput o;
  o.instance_id = "a";
  o.model_id = "m";
  o.confidences = {0.1, 0.7, 0.2000000000000001};
  o.builtin_abstain = false;
  o.prompt_embedding = std::vector<double>{0.5, -0.25};
  o.choice_embeddings = std::vector<std::vector<double>>{{1, 0}, {0, 1}, {0.3, 0.3}};
  ModelOutput bare;
  bare.instance_id = "b";
  bare.model_id = "m";
  bare.confidences = {3.0, 0.0};
  const std::vector<ModelOutput> outputs{o, bare};
  write_outputs(dir / "out.jsonl", outputs);
  EXPECT_EQ(load_outputs(dir / "out.jsonl"), outputs);

  auto mixed = o;
  (*mixed.choice_embeddings)[1] = {1, 2, 3};
  EXPECT_THROW(validate(mixed), InputError);
  auto negative = bare;
  negative.confidences[0] = -0.1;
  EXPECT_THROW(validate(negative), InputError);
}

TEST(Outputs, NormalizeRescalesToOne) {
  ModelOutput o;
  o.confidences = {2.0, 6.0};
  normalize_confidences(o);
  EXPECT_DOUBLE_EQ(o.confidences[0], 0.25);
  EXPECT_DOUBLE_EQ(o.confidences[1], 0.75);
  o.confidences = {0.0, 0.0, 0.0, 0.0};
  normalize_confidences(o);
  EXPECT_DOUBLE_EQ(o.confidences[3], 0.25);
}

std::vector<ModelOutput> outputs_for(const std::vector<Instance>& instances) {
  std::vector<ModelOutput> outs;
  for (const auto& inst : instances) {
    ModelOutput o;
    o.instance_id = inst.id;
    o.model_id = "m";
    o.confidences.assign(inst.choices.size(), 0.5);
    outs.push_back(o);
  }
  return outs;
}

TEST(Join, PairsInInstanceOrder) {
  auto corpus = make_corpus(3, 5);
  corpus[0].id = "i1";
  corpus[1].id = "i2";
  corpus[2].id = "i3";
  auto outs = outputs_for(corpus);
  std::reverse(outs.begin(), outs.end());
  const auto pairs = join(corpus, outs);
  ASSERT_EQ(pairs.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(pairs[i].instance, &corpus[i]);
    EXPECT_EQ(pairs[i].output->instance_id, corpus[i].id);
    EXPECT_EQ(pairs[i].output->confidences.size(), pairs[i].instance->choices.size());
  }
}

TEST(Join, ReportsMissingMismatchedAndUnknown) {
  auto corpus = make_corpus(3, 5, 2, 2);
  corpus[0].id = "i1";
  corpus[1].id = "i2";
  corpus[2].id = "i3";
  auto outs = outputs_for(corpus);

  auto missing = outs;
  missing.erase(missing.begin() + 1);
  EXPECT_THAT(what_of([&] { join(corpus, missing); }), HasSubstr("i2"));

  auto wrong_k = outs;
  wrong_k[0].confidences = {0.2, 0.3, 0.5};
  EXPECT_THAT(what_of([&] { join(corpus, wrong_k); }), HasSubstr("i1"));

  auto unknown = outs;
  unknown.push_back(outs[0]);
  unknown.back().instance_id = "ghost";
  EXPECT_THAT(what_of([&] { join(corpus, unknown); }), HasSubstr("ghost"));
}

std::set<std::string> ids_of(const std::vector<Instance>& v) {
  std::set<std::string> s;
  for (const auto& i : v) s.insert(i.id);
  return s;
}

TEST(Split, DeterministicDisjointHalves) {
  const auto corpus = make_corpus(10, 11);
  const auto a = split(corpus, 0.5, 7);
  const auto b = split(corpus, 0.5, 7);
  EXPECT_EQ(a.train.size(), 5u);
  EXPECT_EQ(a.eval.size(), 5u);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.eval, b.eval);

  const auto c = split(corpus, 0.5, 8);
  EXPECT_EQ(c.train.size(), 5u);
  EXPECT_EQ(c.eval.size(), 5u);
  std::set<std::string> overlap;
  std::ranges::set_intersection(ids_of(c.train), ids_of(c.eval),
                                std::inserter(overlap, overlap.begin()));
  EXPECT_TRUE(overlap.empty());
}

TEST(Split, DerivedInstanceFollowsItsSource) {
  auto corpus = make_corpus(10, 12);
  Instance b = corpus[3];
  b.id = "b";
  b.prompt += " (perturbed)";
  b.provenance = {ProvenanceKind::kRifWq, 0};
  b.ambiguous = true;
  b.gold_index.reset();
  b.source_id = corpus[3].id;
  corpus.push_back(b);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto s = split(corpus, 0.5, seed);
    const auto train = ids_of(s.train);
    EXPECT_EQ(train.contains("b"), train.contains(corpus[3].id)) << "seed " << seed;
  }
}

TEST(Split, IsAPartitionForAllSeedsAndFractions) {
  const auto corpus = make_corpus(37, 13);
  const auto all = ids_of(corpus);
  for (double f : {0.1, 0.25, 0.5, 0.8, 0.95}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto s = split(corpus, f, seed);
      auto train = ids_of(s.train);
      auto eval = ids_of(s.eval);
      EXPECT_EQ(train.size() + eval.size(), corpus.size());
      train.merge(eval);
      EXPECT_EQ(train, all);
      EXPECT_EQ(s.train.size(), static_cast<std::size_t>(std::llround(f * 37)));
    }
  }
}

TEST(Split, EmptySideIsAnError) {
  const auto corpus = make_corpus(3, 14);
  EXPECT_THROW(split(corpus, 0.1, 1), InputError);
  EXPECT_THROW(split(corpus, 0.9, 1), InputError);
  EXPECT_THROW(split(corpus, 1.0, 1), InputError);
  EXPECT_THROW(split({}, 0.5, 1), InputError);
}

}  // namespace
}  // namespace riskgate
