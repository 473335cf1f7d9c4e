#include <gtest/gtest.h>

#include "support.hpp"

using namespace dialogsim;
using testing_support::demo_bundle;
using testing_support::kBookingSeed;

TEST(Markup, BookingSeedParsesIntoTenTurns) {
  const auto d = testing_support::booking_seed();
  ASSERT_EQ(d.turns.size(), 10u);
  EXPECT_EQ(d.turns[0].side, Side::user);
  const auto* u1 = d.turns[0].user();
  ASSERT_NE(u1, nullptr);
  EXPECT_EQ(u1->text, "What movie are playing in Sunnyvale after 2 PM?");
  ASSERT_EQ(u1->spans.size(), 2u);
  EXPECT_EQ(u1->spans[0].surface, "Sunnyvale");
  EXPECT_EQ(u1->spans[0].entity_type, "City");
  EXPECT_EQ(u1->text.substr(u1->spans[1].range.begin, u1->spans[1].range.end - u1->spans[1].range.begin), "2 PM");
  const auto* call = d.turns[1].call();
  ASSERT_NE(call, nullptr);
  EXPECT_EQ(call->api, "FindMovies");
  EXPECT_EQ(call->return_var, "movies0");
  EXPECT_EQ(d.turns[9].nlg()->text, "Thank you for using Atom Tickets");
}

TEST(Markup, ShadowedVarTakesTheTypeOfItsConsumer) {
  const auto d = testing_support::booking_seed();
  // c0 is a City in U-1 and a Count in U-7
  EXPECT_EQ(d.turns[6].user()->spans[0].entity_type, "Count");
  EXPECT_EQ(d.turns[0].user()->spans[0].entity_type, "City");
  const auto sources = binding_sources(d);
  const auto& s8 = sources.at(7);
  ASSERT_TRUE(s8[1].has_value());
  EXPECT_EQ(s8[1]->turn, 6u);
}

TEST(Markup, SerializeParseIdentity) {
  const auto d = testing_support::booking_seed();
  const auto text = serialize_dialog(d);
  EXPECT_EQ(parse_dialog(text, demo_bundle()), d);
  EXPECT_EQ(serialize_dialog(parse_dialog(text, demo_bundle())), text);
}

TEST(Markup, MetadataAndActsRoundTrip) {
  const std::string text =
      "# goal_origin: golden\n"
      "# seed: 3\n"
      "U-1: hi [Oakland|c0] |acts: inform(intent:FindMovies),inform(entity:location)\n"
      "S-2: nlg: What time? |acts: request(entity:timeLowerBound)\n";
  const auto corpus = parse_corpus(text, &demo_bundle());
  ASSERT_EQ(corpus.size(), 1u);
  EXPECT_EQ(corpus[0].metadata.at("seed"), "3");
  EXPECT_EQ(corpus[0].turns[1].nlg()->acts.size(), 1u);
  EXPECT_EQ(serialize_corpus(corpus), text);
}

TEST(Markup, LiteralsAndUnicodeArrow) {
  const auto d = parse_dialog("U-1: movies please\nS-2: FindMovies(location=\"San Jose\",timeLowerBound=\"2 PM\") → movies0\n",
                              demo_bundle());
  const auto* call = d.turns[1].call();
  ASSERT_NE(call, nullptr);
  EXPECT_FALSE(call->bindings[0].second.is_var());
  EXPECT_EQ(*call->bindings[0].second.literal, "San Jose");
}

TEST(Markup, UnresolvedReferenceNamesTheVarAndLine) {
  try {
    parse_corpus("U-1: movies in [Oakland|c0]\nS-2: call: FindMovies(location=$c0,timeLowerBound=$t9) -> movies0\n",
                 &demo_bundle());
    FAIL() << "expected a reference error";
  } catch (const ReferenceError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("t9"), std::string::npos);
  }
}

TEST(Markup, ReferenceMustPrecedeUse) {
  EXPECT_THROW(parse_corpus("U-1: hi\nS-2: call: SelectShow(time=$t0,movieName=$m0) -> show0\nU-3: [4 PM|t0] [Dune|m0]\n",
                            nullptr),
               ReferenceError);
}

TEST(Markup, StructuralErrors) {
  EXPECT_THROW(parse_corpus("S-1: nlg: hello\n", nullptr), ParseError);
  EXPECT_THROW(parse_corpus("U-1: hi\nU-3: skipped\n", nullptr), ParseError);
  EXPECT_THROW(parse_corpus("U-1: broken [span\n", nullptr), ParseError);
  EXPECT_THROW(parse_corpus("U-1: hi\nS-2: call: Nope() -> x0\n", &demo_bundle()), ParseError);
  EXPECT_THROW(parse_corpus("U-1: [Oakland|c0]\nS-2: call: FindMovies(location=$c0,colour=$c0) -> m\n", &demo_bundle()),
               ParseError);
  EXPECT_THROW(parse_corpus("U-1: [Oakland|c0] [2 PM|t0]\nS-2: call: SelectShow(time=$c0,movieName=$t0) -> s\n"
                            "S-3: call: FindMovies(location=$c0,timeLowerBound=$t0) -> m\n",
                            &demo_bundle()),
               ParseError);
}

TEST(Markup, ErrorColumnPointsIntoTheLine) {
  try {
    parse_corpus("U-1: ok |acts: inform(intent:FindMovies),request(entity:x)\n", nullptr);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
    EXPECT_GT(e.column(), 1u);
  }
}

TEST(Markup, CorpusSplitsOnBlankLines) {
  const auto corpus = parse_corpus(kBookingSeed + "\n" + kBookingSeed, &demo_bundle());
  ASSERT_EQ(corpus.size(), 2u);
  EXPECT_EQ(corpus[0], corpus[1]);
  EXPECT_TRUE(parse_corpus("", nullptr).empty());
}

TEST(Markup, DelexicalizeUsesArgumentNames) {
  const auto d = testing_support::booking_seed();
  const auto roles = span_roles(d);
  std::map<std::size_t, std::string> r0;
  for (std::size_t i = 0; i < 2; ++i) r0[i] = roles.at({0, i});
  EXPECT_EQ(delexicalize_turn(*d.turns[0].user(), r0).text, "What movie are playing in {location} after {timeLowerBound}?");
  // without roles the slot is the lowerCamel type, numbered on repeats
  UserUtterance u{"pick 2 PM or 4 PM", {{"2 PM", "t0", "Time", {5, 9}}, {"4 PM", "t1", "Time", {13, 17}}}, {}};
  EXPECT_EQ(delexicalize_turn(u).text, "pick {time} or {time2}");
}
