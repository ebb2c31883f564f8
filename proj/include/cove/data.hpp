#pragma once

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <zlib.h>

#include "cove/common.hpp"

namespace cove {

/// One row of a raw interaction log. Identifiers are kept as strings until
/// dense re-indexing; timestamps are integer epoch milliseconds.
struct Interaction {
  std::string user;
  std::string session;
  std::string item;
  std::int64_t timestamp = 0;
};

/// An ordered run of item interactions by one user within a short time span.
struct Session {
  std::vector<ItemIndex> items;  // ascending by interaction timestamp
  std::int64_t time = 0;         // start timestamp (first interaction)
};

/// Session-structured corpus with dense, contiguous user/item indices.
/// Immutable once built; safe to share read-only across threads.
struct Dataset {
  std::vector<std::vector<Session>> sessions_by_user;  // chronological per user
  std::vector<std::string> user_ids;                   // dense -> raw
  std::vector<std::string> item_ids;
  std::unordered_map<std::string, UserIndex> user_index;  // raw -> dense
  std::unordered_map<std::string, ItemIndex> item_index;

  std::size_t num_users() const { return user_ids.size(); }
  std::size_t num_items() const { return item_ids.size(); }

  std::size_t num_sessions() const {
    std::size_t n = 0;
    for (const auto& s : sessions_by_user) n += s.size();
    return n;
  }

  std::size_t num_interactions() const {
    std::size_t n = 0;
    for (const auto& per_user : sessions_by_user)
      for (const auto& s : per_user) n += s.items.size();
    return n;
  }
};

/// Leave-last-two-sessions-out split. For every user the two most recent
/// sessions are held out and assigned to validation/test by a seeded coin
/// flip; everything earlier stays in train. The item/user catalogs of
/// `train` remain those of the full dataset, so held-out-only items are
/// still scored at evaluation time.
struct SplitDataset {
  Dataset train;
  std::vector<Session> validation;  // one per user, indexed by dense user
  std::vector<Session> test;
  std::uint64_t seed = 0;
};

struct ColumnMapping {
  // Column names looked up in the header row; when has_header is false they
  // must be decimal column indices instead.
  std::string user = "user_id";
  std::string session = "session_id";
  std::string timestamp = "timestamp";
  std::string item = "item_id";
  char delimiter = ',';
  bool has_header = true;
};

namespace detail {

inline std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(delim, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline bool parse_index(const std::string& s, std::size_t& out) {
  if (s.empty()) return false;
  std::size_t v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
    v = v * 10 + static_cast<std::size_t>(c - '0');
  }
  out = v;
  return true;
}

}  // namespace detail

/// Reads a delimiter-separated interaction log (plain or gzip-compressed;
/// zlib handles both transparently). Malformed rows are fatal unless
/// `lenient` is set, in which case they are skipped and counted.
inline std::vector<Interaction> load_interactions(const std::string& path,
                                                  const ColumnMapping& mapping,
                                                  bool lenient = false,
                                                  std::size_t* skipped = nullptr) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (f == nullptr) throw DataError("cannot open interaction file: " + path);

  std::vector<Interaction> out;
  std::string line;
  std::vector<char> buf(1 << 16);
  std::size_t line_no = 0;
  std::size_t skip_count = 0;

  std::size_t col_user = 0, col_session = 1, col_time = 2, col_item = 3;
  bool columns_resolved = !mapping.has_header;
  if (!mapping.has_header) {
    if (!detail::parse_index(mapping.user, col_user) ||
        !detail::parse_index(mapping.session, col_session) ||
        !detail::parse_index(mapping.timestamp, col_time) ||
        !detail::parse_index(mapping.item, col_item)) {
      gzclose(f);
      throw ConfigError("headerless input requires numeric column indices");
    }
  }

  auto read_line = [&](std::string& s) -> bool {
    s.clear();
    while (true) {
      if (gzgets(f, buf.data(), static_cast<int>(buf.size())) == nullptr)
        return !s.empty();
      s += buf.data();
      if (!s.empty() && s.back() == '\n') {
        s.pop_back();
        if (!s.empty() && s.back() == '\r') s.pop_back();
        return true;
      }
    }
  };

  while (read_line(line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = detail::split_line(line, mapping.delimiter);
    if (!columns_resolved) {
      auto find = [&](const std::string& name, std::size_t& idx) {
        auto it = std::find(fields.begin(), fields.end(), name);
        if (it == fields.end()) {
          gzclose(f);
          throw DataError("column '" + name + "' not found in header of " + path);
        }
        idx = static_cast<std::size_t>(it - fields.begin());
      };
      find(mapping.user, col_user);
      find(mapping.session, col_session);
      find(mapping.timestamp, col_time);
      find(mapping.item, col_item);
      columns_resolved = true;
      continue;
    }

    const std::size_t needed = std::max({col_user, col_session, col_time, col_item});
    auto fail = [&](const std::string& why) {
      if (lenient) {
        ++skip_count;
        return true;
      }
      gzclose(f);
      throw DataError(path + ":" + std::to_string(line_no) + ": " + why);
    };

    if (fields.size() <= needed) {
      if (fail("expected at least " + std::to_string(needed + 1) + " columns")) continue;
    }
    const std::string& ts = fields[col_time];
    std::int64_t t = 0;
    bool ok = !ts.empty();
    std::size_t i = (ts[0] == '-') ? 1 : 0;
    if (i == ts.size()) ok = false;
    for (; ok && i < ts.size(); ++i) {
      if (ts[i] < '0' || ts[i] > '9') ok = false;
      t = t * 10 + (ts[i] - '0');
    }
    if (!ok) {
      if (fail("non-numeric timestamp '" + ts + "'")) continue;
    }
    if (!ts.empty() && ts[0] == '-') t = -t;
    if (fields[col_user].empty() || fields[col_session].empty() || fields[col_item].empty()) {
      if (fail("empty identifier field")) continue;
    }
    out.push_back(Interaction{fields[col_user], fields[col_session], fields[col_item], t});
  }
  gzclose(f);
  if (skipped != nullptr) *skipped = skip_count;
  return out;
}

/// Applies the corpus filtering protocol: drop items with fewer than
/// `min_item_interactions` occurrences, then users with fewer than
/// `min_sessions` sessions, alternating until a fixpoint, then re-index
/// densely. Session boundaries come from the session-identifier column;
/// within a session items are ordered by timestamp with file order breaking
/// ties.
inline Dataset build_dataset(const std::vector<Interaction>& raw,
                             std::size_t min_sessions = 3,
                             std::size_t min_item_interactions = 5) {
  if (raw.empty()) throw DataError("build_dataset: empty interaction list");

  // group by (user, session), preserving first-appearance order
  struct RawSession {
    std::string user;
    std::vector<std::size_t> rows;  // indices into raw, file order
  };
  std::unordered_map<std::string, std::size_t> session_slot;  // user|session key
  std::vector<RawSession> sessions;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    std::string key = raw[i].user + '\x1f' + raw[i].session;
    auto [it, inserted] = session_slot.emplace(key, sessions.size());
    if (inserted) sessions.push_back(RawSession{raw[i].user, {}});
    sessions[it->second].rows.push_back(i);
  }
  // stable sort interactions inside each session by timestamp
  for (auto& s : sessions) {
    std::stable_sort(s.rows.begin(), s.rows.end(), [&](std::size_t a, std::size_t b) {
      return raw[a].timestamp < raw[b].timestamp;
    });
  }

  std::vector<char> session_alive(sessions.size(), 1);
  std::unordered_map<std::string, char> item_alive;
  for (const auto& r : raw) item_alive.emplace(r.item, 1);

  bool changed = true;
  while (changed) {
    changed = false;
    // pass 1: item occurrence counts over surviving sessions
    std::unordered_map<std::string, std::size_t> item_count;
    for (std::size_t s = 0; s < sessions.size(); ++s) {
      if (!session_alive[s]) continue;
      for (std::size_t row : sessions[s].rows) {
        if (item_alive[raw[row].item]) ++item_count[raw[row].item];
      }
    }
    for (auto& [item, alive] : item_alive) {
      if (alive && item_count[item] < min_item_interactions) {
        alive = 0;
        changed = true;
      }
    }
    // pass 2: drop emptied sessions, then users under the session threshold
    std::unordered_map<std::string, std::size_t> sessions_per_user;
    for (std::size_t s = 0; s < sessions.size(); ++s) {
      if (!session_alive[s]) continue;
      bool any = false;
      for (std::size_t row : sessions[s].rows)
        if (item_alive[raw[row].item]) {
          any = true;
          break;
        }
      if (!any) {
        session_alive[s] = 0;
        changed = true;
        continue;
      }
      ++sessions_per_user[sessions[s].user];
    }
    for (std::size_t s = 0; s < sessions.size(); ++s) {
      if (!session_alive[s]) continue;
      if (sessions_per_user[sessions[s].user] < min_sessions) {
        session_alive[s] = 0;
        changed = true;
      }
    }
  }

  // dense re-indexing in first-appearance (file) order
  Dataset ds;
  for (std::size_t s = 0; s < sessions.size(); ++s) {
    if (!session_alive[s]) continue;
    const auto& rs = sessions[s];
    if (ds.user_index.find(rs.user) == ds.user_index.end()) {
      ds.user_index.emplace(rs.user, static_cast<UserIndex>(ds.user_ids.size()));
      ds.user_ids.push_back(rs.user);
      ds.sessions_by_user.emplace_back();
    }
    Session out;
    for (std::size_t row : rs.rows) {
      const auto& item = raw[row].item;
      if (!item_alive[item]) continue;
      auto it = ds.item_index.find(item);
      if (it == ds.item_index.end()) {
        it = ds.item_index.emplace(item, static_cast<ItemIndex>(ds.item_ids.size())).first;
        ds.item_ids.push_back(item);
      }
      if (out.items.empty()) out.time = raw[row].timestamp;
      out.items.push_back(it->second);
    }
    ds.sessions_by_user[ds.user_index[rs.user]].push_back(std::move(out));
  }

  if (ds.user_ids.empty())
    throw DataError("build_dataset: filtering removed every user (thresholds too strict)");

  // chronological ordering of each user's sessions, stable on ties
  for (auto& per_user : ds.sessions_by_user) {
    std::stable_sort(per_user.begin(), per_user.end(),
                     [](const Session& a, const Session& b) { return a.time < b.time; });
  }
  return ds;
}

/// Reserves each user's final two sessions, assigning them to validation and
/// test by one seeded coin flip per user. Deterministic for a fixed seed.
inline SplitDataset split(const Dataset& dataset, std::uint64_t seed) {
  SplitDataset out;
  out.seed = seed;
  out.train.user_ids = dataset.user_ids;
  out.train.item_ids = dataset.item_ids;
  out.train.user_index = dataset.user_index;
  out.train.item_index = dataset.item_index;
  out.train.sessions_by_user.resize(dataset.num_users());
  out.validation.resize(dataset.num_users());
  out.test.resize(dataset.num_users());

  Rng rng(seed);
  for (UserIndex u = 0; u < dataset.num_users(); ++u) {
    const auto& sess = dataset.sessions_by_user[u];
    if (sess.size() < 3)
      throw DataError("split: user " + dataset.user_ids[u] + " has fewer than 3 sessions");
    out.train.sessions_by_user[u].assign(sess.begin(), sess.end() - 2);
    const Session& a = sess[sess.size() - 2];
    const Session& b = sess[sess.size() - 1];
    if (rng.coin()) {
      out.validation[u] = a;
      out.test[u] = b;
    } else {
      out.validation[u] = b;
      out.test[u] = a;
    }
  }
  return out;
}

struct DatasetStats {
  std::size_t interactions = 0;
  std::size_t users = 0;
  std::size_t sessions = 0;
  std::size_t items = 0;
  double sessions_per_user = 0.0;
  double interactions_per_item = 0.0;
  double interactions_per_session = 0.0;
  double density = 0.0;  // interactions / (users * items)
};

inline DatasetStats dataset_stats(const Dataset& ds) {
  DatasetStats st;
  st.users = ds.num_users();
  st.items = ds.num_items();
  st.sessions = ds.num_sessions();
  st.interactions = ds.num_interactions();
  st.sessions_per_user = static_cast<double>(st.sessions) / static_cast<double>(st.users);
  st.interactions_per_item =
      static_cast<double>(st.interactions) / static_cast<double>(st.items);
  st.interactions_per_session =
      static_cast<double>(st.interactions) / static_cast<double>(st.sessions);
  st.density = static_cast<double>(st.interactions) /
               (static_cast<double>(st.users) * static_cast<double>(st.items));
  return st;
}

// ---- dataset snapshot persistence ("CVDS", little-endian, fixed width) ----

namespace detail {

inline void put_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void put(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  put_bytes(os, &v, sizeof(T));
}

inline void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  put_bytes(os, s.data(), s.size());
}

inline void get_bytes(std::istream& is, void* p, std::size_t n, const std::string& path) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!is) throw DataError("truncated file: " + path);
}

template <typename T>
T get(std::istream& is, const std::string& path) {
  T v;
  get_bytes(is, &v, sizeof(T), path);
  return v;
}

inline std::string get_string(std::istream& is, const std::string& path) {
  auto n = get<std::uint32_t>(is, path);
  std::string s(n, '\0');
  if (n > 0) get_bytes(is, s.data(), n, path);
  return s;
}

}  // namespace detail

inline constexpr char kSnapshotMagic[4] = {'C', 'V', 'D', 'S'};
inline constexpr std::uint32_t kSnapshotVersion = 1;

inline void save_snapshot(const Dataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write snapshot: " + path);
  detail::put_bytes(os, kSnapshotMagic, 4);
  detail::put<std::uint32_t>(os, kSnapshotVersion);
  detail::put<std::uint64_t>(os, ds.num_users());
  detail::put<std::uint64_t>(os, ds.num_items());
  detail::put<std::uint64_t>(os, ds.num_sessions());
  detail::put<std::uint64_t>(os, ds.num_interactions());
  for (const auto& id : ds.user_ids) detail::put_string(os, id);
  for (const auto& id : ds.item_ids) detail::put_string(os, id);
  for (const auto& per_user : ds.sessions_by_user) {
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(per_user.size()));
    for (const auto& s : per_user) {
      detail::put<std::int64_t>(os, s.time);
      detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(s.items.size()));
      for (ItemIndex it : s.items) detail::put<std::uint32_t>(os, it);
    }
  }
  if (!os) throw DataError("write failed: " + path);
}

inline Dataset load_snapshot(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open snapshot: " + path);
  char magic[4];
  detail::get_bytes(is, magic, 4, path);
  if (std::memcmp(magic, kSnapshotMagic, 4) != 0)
    throw DataError("bad snapshot magic in " + path);
  auto version = detail::get<std::uint32_t>(is, path);
  if (version != kSnapshotVersion)
    throw DataError("snapshot version " + std::to_string(version) + " in " + path +
                    ", expected " + std::to_string(kSnapshotVersion));
  auto users = detail::get<std::uint64_t>(is, path);
  auto items = detail::get<std::uint64_t>(is, path);
  auto sessions = detail::get<std::uint64_t>(is, path);
  auto interactions = detail::get<std::uint64_t>(is, path);

  Dataset ds;
  ds.user_ids.reserve(users);
  for (std::uint64_t i = 0; i < users; ++i) {
    ds.user_ids.push_back(detail::get_string(is, path));
    ds.user_index.emplace(ds.user_ids.back(), static_cast<UserIndex>(i));
  }
  ds.item_ids.reserve(items);
  for (std::uint64_t i = 0; i < items; ++i) {
    ds.item_ids.push_back(detail::get_string(is, path));
    ds.item_index.emplace(ds.item_ids.back(), static_cast<ItemIndex>(i));
  }
  ds.sessions_by_user.resize(users);
  for (std::uint64_t u = 0; u < users; ++u) {
    auto count = detail::get<std::uint32_t>(is, path);
    ds.sessions_by_user[u].resize(count);
    for (auto& s : ds.sessions_by_user[u]) {
      s.time = detail::get<std::int64_t>(is, path);
      auto len = detail::get<std::uint32_t>(is, path);
      s.items.resize(len);
      for (auto& it : s.items) {
        it = detail::get<std::uint32_t>(is, path);
        if (it >= items) throw DataError("item index out of range in " + path);
      }
    }
  }
  if (ds.num_sessions() != sessions || ds.num_interactions() != interactions)
    throw DataError("snapshot counts do not match payload in " + path);
  return ds;
}

}  // namespace cove
