#include <gtest/gtest.h>

#include <thread>

#include "sathi/journal.hpp"
#include "support/test_support.hpp"

namespace sathi::journal {
namespace {

TEST(Journal, AppendAssignsSeqAndOffsets) {
  testing::TempDir dir;
  const auto path = dir / "j.jsonl";
  {
    Journal j(path);
    EXPECT_EQ(j.next_seq(), 1u);
    const auto off1 = j.append({{"type", kHeartbeat}, {"ts", 1}});
    const auto off2 = j.append({{"type", kHeartbeat}, {"ts", 2}});
    EXPECT_LT(off1, off2);
    EXPECT_EQ(off2, std::filesystem::file_size(path));
    EXPECT_EQ(j.offset(), off2);
  }
  const auto recs = read_journal(path);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0]["seq"], 1);
  EXPECT_EQ(recs[1]["seq"], 2);
  // Reopening continues the sequence.
  Journal again(path);
  EXPECT_EQ(again.next_seq(), 3u);
  const auto off = again.offset();
  again.append({{"type", kFeedback}, {"ts", 3}});
  const auto tail = read_journal(path, off);
  ASSERT_EQ(tail.size(), 1u);
  EXPECT_EQ(tail[0]["type"], kFeedback);
}

TEST(Journal, TornTailIsDropped) {
  const auto recs = parse_journal("{\"type\":\"a\"}\n{\"type\":\"b\"}\n{\"type\":\"c\", \"s");
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_TRUE(parse_journal("").empty());
  EXPECT_EQ(parse_journal("{\"type\":\"a\"}").size(), 0u);
  EXPECT_THROW(parse_journal("{\"seq\":1}\n"), JournalCorrupt);
}

TEST(Journal, CorruptMiddleLineReportsLineNumber) {
  try {
    parse_journal("{\"type\":\"a\"}\n{\"type\":\"b\"}\ngarbage\n{\"type\":\"d\"}\n");
    FAIL();
  } catch (const JournalCorrupt& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  try {
    parse_journal("[1]\n", 10);
    FAIL();
  } catch (const JournalCorrupt& e) {
    EXPECT_EQ(e.line(), 10u);
  }
}

TEST(Journal, TornFileRecoversOnReopen) {
  testing::TempDir dir;
  const auto path = dir / "j.jsonl";
  write_file(path, "{\"seq\":1,\"type\":\"heartbeat\",\"ts\":0}\n{\"seq\":2,\"ty");
  {
    Journal j(path);
    EXPECT_EQ(j.next_seq(), 2u);
    j.append({{"type", kHeartbeat}, {"ts", 5}});
  }
  const auto recs = read_journal(path);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[1]["seq"], 2);
  EXPECT_EQ(recs[1]["ts"], 5);
  // A second restart must not find a corrupt line.
  Journal again(path);
  EXPECT_EQ(again.next_seq(), 3u);
}

TEST(Journal, ConcurrentAppendsStayWhole) {
  testing::TempDir dir;
  Journal j(dir / "j.jsonl");
  std::vector<std::thread> ts;
  for (int t = 0; t < 8; ++t) {
    ts.emplace_back([&, t] {
      for (int i = 0; i < 50; ++i) j.append({{"type", kTurn}, {"ts", i}, {"who", t}});
    });
  }
  for (auto& t : ts) t.join();
  const auto recs = read_journal(dir / "j.jsonl");
  ASSERT_EQ(recs.size(), 400u);
  for (std::size_t i = 0; i < recs.size(); ++i) EXPECT_EQ(recs[i]["seq"], i + 1);
}

}  // namespace
}  // namespace sathi::journal
