#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "cove/data.hpp"

using namespace cove;

namespace {

std::string fixture(const std::string& name) { return std::string(COVE_DATA_DIR) + "/" + name; }

std::string temp_path(const std::string& name) {
  return std::string("cove_test_") + name;
}

std::vector<Interaction> toy_raw() {
  return load_interactions(fixture("toy_interactions.csv"), ColumnMapping{});
}

}  // namespace

TEST_CASE("load_interactions parses the toy fixture in file order") {
  auto rows = toy_raw();
  REQUIRE(rows.size() == 12);
  CHECK(rows[0].user == "u0");
  CHECK(rows[0].session == "s0");
  CHECK(rows[0].item == "a");
  CHECK(rows[0].timestamp == 100);
  CHECK(rows[11].user == "u3");
  CHECK(rows[11].item == "b");
}

TEST_CASE("load_interactions: empty file gives empty list") {
  const std::string path = temp_path("empty.csv");
  {
    std::ofstream os(path);
    os << "user_id,session_id,timestamp,item_id\n";
  }
  auto rows = load_interactions(path, ColumnMapping{});
  CHECK(rows.empty());
  std::remove(path.c_str());
}

TEST_CASE("load_interactions: bad timestamp is fatal unless lenient") {
  const std::string path = temp_path("bad.csv");
  {
    std::ofstream os(path);
    os << "user_id,session_id,timestamp,item_id\n";
    os << "u,s,100,a\n";
    os << "u,s,oops,b\n";
  }
  CHECK_THROWS_WITH(load_interactions(path, ColumnMapping{}),
                    Catch::Matchers::ContainsSubstring(":3"));
  std::size_t skipped = 0;
  auto rows = load_interactions(path, ColumnMapping{}, /*lenient=*/true, &skipped);
  CHECK(rows.size() == 1);
  CHECK(skipped == 1);
  std::remove(path.c_str());
}

TEST_CASE("load_interactions: missing file") {
  CHECK_THROWS_AS(load_interactions("no/such/file.csv", ColumnMapping{}), DataError);
}

TEST_CASE("load_interactions reads gzip input") {
  const std::string path = temp_path("gz.csv.gz");
  {
    gzFile f = gzopen(path.c_str(), "wb");
    REQUIRE(f != nullptr);
    const char* text = "user_id,session_id,timestamp,item_id\nu,s,5,a\nu,s,6,b\n";
    gzwrite(f, text, static_cast<unsigned>(std::strlen(text)));
    gzclose(f);
  }
  auto rows = load_interactions(path, ColumnMapping{});
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].item == "b");
  std::remove(path.c_str());
}

TEST_CASE("build_dataset leaves an already-feasible corpus unchanged") {
  // 1 user, 3 sessions, 1 item occurring 5 times
  std::vector<Interaction> raw;
  for (int s = 0; s < 3; ++s)
    for (int k = 0; k < (s == 0 ? 1 : 2); ++k)
      raw.push_back({"u", "s" + std::to_string(s), "x", s * 100 + k});
  REQUIRE(raw.size() == 5);
  Dataset ds = build_dataset(raw, 3, 5);
  CHECK(ds.num_users() == 1);
  CHECK(ds.num_items() == 1);
  CHECK(ds.num_sessions() == 3);
  CHECK(ds.num_interactions() == 5);
}

TEST_CASE("build_dataset drops users under the session threshold") {
  std::vector<Interaction> raw;
  // strong user: 3 sessions, items x,y twice each so both survive the
  // item threshold on their own; weak user: only 2 sessions
  for (int s = 0; s < 3; ++s) {
    raw.push_back({"strong", "ss" + std::to_string(s), "x", s * 10});
    raw.push_back({"strong", "ss" + std::to_string(s), "y", s * 10 + 1});
    raw.push_back({"strong", "ss" + std::to_string(s), "x", s * 10 + 2});
    raw.push_back({"strong", "ss" + std::to_string(s), "y", s * 10 + 3});
  }
  for (int s = 0; s < 2; ++s) {
    raw.push_back({"weak", "ws" + std::to_string(s), "x", s * 10});
    raw.push_back({"weak", "ws" + std::to_string(s), "y", s * 10 + 1});
  }
  Dataset ds = build_dataset(raw, 3, 5);
  CHECK(ds.num_users() == 1);
  CHECK(ds.user_index.count("strong") == 1);
  CHECK(ds.user_index.count("weak") == 0);
}

TEST_CASE("build_dataset filtering reaches a fixpoint") {
  // Item y only reaches 5 occurrences through the weak user's sessions:
  // once the weak user is dropped, y must go too, taking a session of the
  // strong user with it.
  std::vector<Interaction> raw;
  for (int s = 0; s < 3; ++s) {
    raw.push_back({"strong", "ss" + std::to_string(s), "x", s * 10});
    raw.push_back({"strong", "ss" + std::to_string(s), "x", s * 10 + 1});
  }
  raw.push_back({"strong", "ss3", "y", 40});
  raw.push_back({"weak", "ws0", "y", 0});
  raw.push_back({"weak", "ws0", "y", 1});
  raw.push_back({"weak", "ws1", "y", 10});
  raw.push_back({"weak", "ws1", "y", 11});
  Dataset ds = build_dataset(raw, 3, 5);
  CHECK(ds.num_users() == 1);
  CHECK(ds.num_items() == 1);
  CHECK(ds.item_index.count("y") == 0);
  // fixpoint property: thresholds hold simultaneously on the output
  std::vector<std::size_t> item_count(ds.num_items(), 0);
  for (const auto& per_user : ds.sessions_by_user) {
    CHECK(per_user.size() >= 3);
    for (const auto& s : per_user)
      for (ItemIndex p : s.items) ++item_count[p];
  }
  for (auto c : item_count) CHECK(c >= 5);
}

TEST_CASE("build_dataset rejects empty input and over-strict thresholds") {
  CHECK_THROWS_AS(build_dataset({}, 3, 5), DataError);
  std::vector<Interaction> raw{{"u", "s", "x", 0}};
  CHECK_THROWS_AS(build_dataset(raw, 3, 5), DataError);
}

TEST_CASE("re-indexing is a bijection back to raw identifiers") {
  Dataset ds = build_dataset(toy_raw(), 1, 1);
  REQUIRE(ds.num_users() == 4);
  REQUIRE(ds.num_items() == 5);
  for (UserIndex u = 0; u < ds.num_users(); ++u)
    CHECK(ds.user_index.at(ds.user_ids[u]) == u);
  for (ItemIndex p = 0; p < ds.num_items(); ++p)
    CHECK(ds.item_index.at(ds.item_ids[p]) == p);
}

TEST_CASE("sessions are ordered by time and items by timestamp") {
  Dataset ds = build_dataset(toy_raw(), 1, 1);
  for (const auto& per_user : ds.sessions_by_user) {
    for (std::size_t t = 1; t < per_user.size(); ++t)
      CHECK(per_user[t - 1].time <= per_user[t].time);
  }
  // u3's first session is d,e,a by timestamp
  UserIndex u3 = ds.user_index.at("u3");
  const auto& s4 = ds.sessions_by_user[u3][0];
  REQUIRE(s4.items.size() == 3);
  CHECK(ds.item_ids[s4.items[0]] == "d");
  CHECK(ds.item_ids[s4.items[2]] == "a");
}

TEST_CASE("dataset_stats matches the committed hand count") {
  Dataset ds = build_dataset(toy_raw(), 1, 1);
  DatasetStats st = dataset_stats(ds);
  CHECK(st.interactions == 12);
  CHECK(st.users == 4);
  CHECK(st.sessions == 6);
  CHECK(st.items == 5);
  CHECK(st.sessions_per_user == Catch::Approx(1.5));
  CHECK(st.interactions_per_item == Catch::Approx(2.4));
  CHECK(st.interactions_per_session == Catch::Approx(2.0));
  CHECK(st.density == Catch::Approx(0.6));
}

TEST_CASE("dataset_stats on a single-user two-item corpus") {
  std::vector<Interaction> raw{{"u", "s", "x", 0}, {"u", "s", "y", 1}};
  DatasetStats st = dataset_stats(build_dataset(raw, 1, 1));
  CHECK(st.density == Catch::Approx(1.0));
  CHECK(st.sessions_per_user == Catch::Approx(1.0));
  CHECK(st.interactions_per_session == Catch::Approx(2.0));
}

namespace {

Dataset three_session_corpus(std::size_t users) {
  std::vector<Interaction> raw;
  for (std::size_t u = 0; u < users; ++u) {
    for (int s = 0; s < 3; ++s) {
      raw.push_back({"u" + std::to_string(u), "s" + std::to_string(s), "x",
                     static_cast<std::int64_t>(s * 10)});
      raw.push_back({"u" + std::to_string(u), "s" + std::to_string(s), "y",
                     static_cast<std::int64_t>(s * 10 + 1)});
      raw.push_back({"u" + std::to_string(u), "s" + std::to_string(s), "x",
                     static_cast<std::int64_t>(s * 10 + 2)});
      raw.push_back({"u" + std::to_string(u), "s" + std::to_string(s), "y",
                     static_cast<std::int64_t>(s * 10 + 3)});
    }
  }
  return build_dataset(raw, 3, 5);
}

}  // namespace

TEST_CASE("split: exactly 3 sessions give 1 train / 1 validation / 1 test") {
  Dataset ds = three_session_corpus(1);
  SplitDataset sp = split(ds, 0);
  REQUIRE(sp.train.sessions_by_user[0].size() == 1);
  CHECK(sp.validation[0].items.size() == 4);
  CHECK(sp.test[0].items.size() == 4);
  // partition: the three sessions are exactly the originals
  std::vector<std::int64_t> times{sp.train.sessions_by_user[0][0].time,
                                  sp.validation[0].time, sp.test[0].time};
  std::sort(times.begin(), times.end());
  CHECK(times == std::vector<std::int64_t>{0, 10, 20});
}

TEST_CASE("split is deterministic and seed-sensitive") {
  Dataset ds = three_session_corpus(10);
  SplitDataset a = split(ds, 0);
  SplitDataset b = split(ds, 0);
  for (UserIndex u = 0; u < 10; ++u) {
    CHECK(a.validation[u].time == b.validation[u].time);
    CHECK(a.test[u].time == b.test[u].time);
  }
  SplitDataset c = split(ds, 1);
  bool any_diff = false;
  for (UserIndex u = 0; u < 10; ++u)
    if (a.validation[u].time != c.validation[u].time) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("split rejects users with fewer than 3 sessions") {
  Dataset ds = build_dataset(toy_raw(), 1, 1);
  CHECK_THROWS_AS(split(ds, 0), DataError);
}

TEST_CASE("split preserves the multiset of sessions") {
  Dataset full = build_dataset(
      load_interactions(fixture("toy_sessions.csv"), ColumnMapping{}), 3, 5);
  SplitDataset sp = split(full, 7);
  std::size_t total = 0;
  for (UserIndex u = 0; u < full.num_users(); ++u) {
    std::vector<std::int64_t> orig, parts;
    for (const auto& s : full.sessions_by_user[u]) orig.push_back(s.time);
    for (const auto& s : sp.train.sessions_by_user[u]) parts.push_back(s.time);
    parts.push_back(sp.validation[u].time);
    parts.push_back(sp.test[u].time);
    std::sort(orig.begin(), orig.end());
    std::sort(parts.begin(), parts.end());
    CHECK(orig == parts);
    total += full.sessions_by_user[u].size();
  }
  CHECK(total == full.num_sessions());
}

TEST_CASE("snapshot round trip preserves the dataset") {
  Dataset ds = build_dataset(
      load_interactions(fixture("toy_sessions.csv"), ColumnMapping{}), 3, 5);
  const std::string path = temp_path("snap.cvds");
  save_snapshot(ds, path);
  Dataset back = load_snapshot(path);
  CHECK(back.num_users() == ds.num_users());
  CHECK(back.num_items() == ds.num_items());
  CHECK(back.num_sessions() == ds.num_sessions());
  CHECK(back.num_interactions() == ds.num_interactions());
  CHECK(back.user_ids == ds.user_ids);
  CHECK(back.item_ids == ds.item_ids);
  for (UserIndex u = 0; u < ds.num_users(); ++u) {
    REQUIRE(back.sessions_by_user[u].size() == ds.sessions_by_user[u].size());
    for (std::size_t t = 0; t < ds.sessions_by_user[u].size(); ++t) {
      CHECK(back.sessions_by_user[u][t].time == ds.sessions_by_user[u][t].time);
      CHECK(back.sessions_by_user[u][t].items == ds.sessions_by_user[u][t].items);
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("snapshot with corrupted magic names the file") {
  const std::string path = temp_path("corrupt.cvds");
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOPE garbage";
  }
  CHECK_THROWS_WITH(load_snapshot(path), Catch::Matchers::ContainsSubstring(path));
  std::remove(path.c_str());
}
