#include <doctest.h>

#include "eva/porter.hpp"

using eva::porter_stem;

// Vectors from the algorithm's published example lists.
TEST_CASE("porter: plural and participle suffixes") {
  CHECK(porter_stem("caresses") == "caress");
  CHECK(porter_stem("ponies") == "poni");
  CHECK(porter_stem("ties") == "ti");
  CHECK(porter_stem("caress") == "caress");
  CHECK(porter_stem("cats") == "cat");
  CHECK(porter_stem("feed") == "feed");
  CHECK(porter_stem("agreed") == "agre");
  CHECK(porter_stem("plastered") == "plaster");
  CHECK(porter_stem("bled") == "bled");
  CHECK(porter_stem("motoring") == "motor");
  CHECK(porter_stem("sing") == "sing");
  CHECK(porter_stem("conflated") == "conflat");
  CHECK(porter_stem("troubled") == "troubl");
  CHECK(porter_stem("sized") == "size");
  CHECK(porter_stem("hopping") == "hop");
  CHECK(porter_stem("tanned") == "tan");
  CHECK(porter_stem("falling") == "fall");
  CHECK(porter_stem("hissing") == "hiss");
  CHECK(porter_stem("fizzed") == "fizz");
  CHECK(porter_stem("failing") == "fail");
  CHECK(porter_stem("filing") == "file");
}

TEST_CASE("porter: y handling and longer suffixes") {
  CHECK(porter_stem("happy") == "happi");
  CHECK(porter_stem("sky") == "sky");
  CHECK(porter_stem("relational") == "relat");
  CHECK(porter_stem("conditional") == "condit");
  CHECK(porter_stem("rational") == "ration");
  CHECK(porter_stem("valenci") == "valenc");
  CHECK(porter_stem("digitizer") == "digit");
  CHECK(porter_stem("operator") == "oper");
  CHECK(porter_stem("feudalism") == "feudal");
  CHECK(porter_stem("decisiveness") == "decis");
  CHECK(porter_stem("hopefulness") == "hope");
  CHECK(porter_stem("formaliti") == "formal");
  CHECK(porter_stem("formative") == "form");
  CHECK(porter_stem("formalize") == "formal");
  CHECK(porter_stem("electriciti") == "electr");
  CHECK(porter_stem("electrical") == "electr");
  CHECK(porter_stem("hopeful") == "hope");
  CHECK(porter_stem("goodness") == "good");
}

TEST_CASE("porter: step 4 and 5 deletions") {
  CHECK(porter_stem("revival") == "reviv");
  CHECK(porter_stem("allowance") == "allow");
  CHECK(porter_stem("inference") == "infer");
  CHECK(porter_stem("airliner") == "airlin");
  CHECK(porter_stem("adjustable") == "adjust");
  CHECK(porter_stem("defensible") == "defens");
  CHECK(porter_stem("irritant") == "irrit");
  CHECK(porter_stem("replacement") == "replac");
  CHECK(porter_stem("adjustment") == "adjust");
  CHECK(porter_stem("dependent") == "depend");
  CHECK(porter_stem("adoption") == "adopt");
  CHECK(porter_stem("homologou") == "homolog");
  CHECK(porter_stem("communism") == "commun");
  CHECK(porter_stem("activate") == "activ");
  CHECK(porter_stem("angulariti") == "angular");
  CHECK(porter_stem("homologous") == "homolog");
  CHECK(porter_stem("effective") == "effect");
  CHECK(porter_stem("bowdlerize") == "bowdler");
  CHECK(porter_stem("probate") == "probat");
  CHECK(porter_stem("rate") == "rate");
  CHECK(porter_stem("cease") == "ceas");
  CHECK(porter_stem("controll") == "control");
  CHECK(porter_stem("roll") == "roll");
}

TEST_CASE("porter: short words pass through") {
  CHECK(porter_stem("a") == "a");
  CHECK(porter_stem("is") == "is");
  CHECK(porter_stem("be") == "be");
}

TEST_CASE("porter: words from the reward vocabulary") {
  CHECK(porter_stem("stemming") == "stem");
  CHECK(porter_stem("opens") == "open");
  CHECK(porter_stem("rings") == "ring");
  CHECK(porter_stem("scored") == "score");
  CHECK(porter_stem("flashes") == "flash");
}
