#include <gtest/gtest.h>

#include "blocksr/error.hpp"
#include "blocksr/ranges.hpp"

namespace blocksr {
namespace {

TEST(IntList, ItemsAndRanges) {
  EXPECT_EQ(parse_int_list("7", "L"), (std::vector<int>{7}));
  EXPECT_EQ(parse_int_list("1..4", "L"), (std::vector<int>{1, 2, 3, 4}));
  EXPECT_EQ(parse_int_list("0..20:5", "L"), (std::vector<int>{0, 5, 10, 15, 20}));
  EXPECT_EQ(parse_int_list("0..12", "theta", 5), (std::vector<int>{0, 5, 10}));
  EXPECT_EQ(parse_int_list(" 3 , 1..2 ", "L"), (std::vector<int>{3, 1, 2}));
  EXPECT_EQ(parse_int_list("0..175", "theta", 5).size(), 36u);
}

TEST(IntList, Errors) {
  for (const char* bad : {"", "x", "1..", "..3", "5..1", "1..4:0", "1..4:-1", "1,,2", "1.5"}) {
    try {
      parse_int_list(bad, "L");
      ADD_FAILURE() << bad;
    } catch (const ParseError& e) {
      EXPECT_EQ(e.code(), ErrorCode::kSyntax) << bad;
      EXPECT_EQ(e.field(), "L") << bad;
    }
  }
}

TEST(RealList, Values) {
  EXPECT_EQ(parse_real_list("1,2.25, 3.5", "gamma"), (std::vector<double>{1.0, 2.25, 3.5}));
  EXPECT_THROW(parse_real_list("1,a", "gamma"), ParseError);
  EXPECT_THROW(parse_real_list("", "gamma"), ParseError);
}

TEST(FormatReal, ShortestRoundTrip) {
  EXPECT_EQ(format_real(2.25), "2.25");
  EXPECT_EQ(format_real(4.05), "4.05");
  EXPECT_EQ(format_real(3.0), "3");
  EXPECT_EQ(std::stod(format_real(0.1 + 0.2)), 0.1 + 0.2);
}

}  // namespace
}  // namespace blocksr
