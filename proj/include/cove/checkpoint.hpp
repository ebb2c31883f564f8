#pragma once

#include <cstring>
#include <fstream>
#include <string>

#include "cove/data.hpp"
#include "cove/model.hpp"

namespace cove {

inline constexpr char kCheckpointMagic[4] = {'C', 'V', 'M', 'D'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Serialized model: header (variant, roster, shapes, seed), per-expert
/// parameter blocks, the gate matrix, and a short training-log digest.
/// All floats are 32-bit little-endian; round trips are bit-exact.
inline void save_checkpoint(const CoVEModel& model, const std::string& path,
                            const std::string& log_digest = "") {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write checkpoint: " + path);
  detail::put_bytes(os, kCheckpointMagic, 4);
  detail::put<std::uint32_t>(os, kCheckpointVersion);
  detail::put<std::uint8_t>(os, static_cast<std::uint8_t>(model.variant()));
  detail::put<std::uint8_t>(os, static_cast<std::uint8_t>(model.gate_mode()));
  detail::put<std::uint8_t>(os, model.uniform_gate_mode() ? 1 : 0);
  detail::put<std::uint8_t>(os, 0);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(model.num_experts()));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(model.dim()));
  detail::put<std::uint64_t>(os, model.num_items());
  detail::put<std::uint64_t>(os, model.num_users());
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(model.max_session_len()));
  detail::put<std::uint32_t>(os, 0);
  detail::put<std::uint64_t>(os, model.seed());
  for (ExpertKind k : model.roster())
    detail::put<std::uint8_t>(os, static_cast<std::uint8_t>(k));
  const GateParams& gate = model.gate();
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(gate.input_dim));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(gate.num_experts));
  detail::put_bytes(os, gate.w.data(), gate.w.size() * sizeof(float));
  for (std::size_t i = 0; i < model.num_experts(); ++i) {
    const Expert& e = model.expert(i);
    detail::put<std::uint8_t>(os, static_cast<std::uint8_t>(e.kind()));
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(e.blocks().size()));
    for (const auto& b : e.blocks()) {
      detail::put_string(os, b.name);
      detail::put<std::uint64_t>(os, b.rows);
      detail::put<std::uint64_t>(os, b.cols);
      detail::put_bytes(os, b.v.data(), b.v.size() * sizeof(float));
    }
  }
  detail::put_string(os, log_digest);
  if (!os) throw DataError("write failed: " + path);
}

inline CoVEModel load_checkpoint(const std::string& path, std::string* digest = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  detail::get_bytes(is, magic, 4, path);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw DataError("bad checkpoint magic in " + path);
  auto version = detail::get<std::uint32_t>(is, path);
  if (version != kCheckpointVersion)
    throw DataError("checkpoint version " + std::to_string(version) + " in " + path +
                    ", this build reads version " + std::to_string(kCheckpointVersion));
  auto variant = static_cast<FusionVariant>(detail::get<std::uint8_t>(is, path));
  auto gate_mode = static_cast<GateInputMode>(detail::get<std::uint8_t>(is, path));
  auto uniform = detail::get<std::uint8_t>(is, path);
  detail::get<std::uint8_t>(is, path);
  auto n = detail::get<std::uint32_t>(is, path);
  auto d = detail::get<std::uint32_t>(is, path);
  auto num_items = detail::get<std::uint64_t>(is, path);
  auto num_users = detail::get<std::uint64_t>(is, path);
  auto max_len = detail::get<std::uint32_t>(is, path);
  detail::get<std::uint32_t>(is, path);
  auto seed = detail::get<std::uint64_t>(is, path);
  std::vector<ExpertKind> roster(n);
  for (auto& k : roster) {
    auto tag = detail::get<std::uint8_t>(is, path);
    if (tag > 3) throw DataError("unknown expert kind tag in " + path);
    k = static_cast<ExpertKind>(tag);
  }
  CoVEModel model(variant, roster, num_items, num_users, d, max_len, gate_mode, seed);
  model.set_uniform_gate_mode(uniform != 0);
  auto gate_rows = detail::get<std::uint32_t>(is, path);
  auto gate_cols = detail::get<std::uint32_t>(is, path);
  if (gate_rows != model.gate().input_dim || gate_cols != model.gate().num_experts)
    throw DataError("gate shape mismatch in " + path);
  detail::get_bytes(is, model.gate().w.data(), model.gate().w.size() * sizeof(float), path);
  for (std::size_t i = 0; i < model.num_experts(); ++i) {
    Expert& e = model.expert(i);
    auto tag = detail::get<std::uint8_t>(is, path);
    if (static_cast<ExpertKind>(tag) != e.kind())
      throw DataError("expert kind mismatch in " + path);
    auto n_blocks = detail::get<std::uint32_t>(is, path);
    if (n_blocks != e.blocks().size())
      throw DataError("expert block count mismatch in " + path);
    for (auto& b : e.blocks()) {
      auto name = detail::get_string(is, path);
      auto rows = detail::get<std::uint64_t>(is, path);
      auto cols = detail::get<std::uint64_t>(is, path);
      if (name != b.name || rows != b.rows || cols != b.cols)
        throw DataError("block '" + b.name + "' shape mismatch in " + path);
      detail::get_bytes(is, b.v.data(), b.v.size() * sizeof(float), path);
    }
  }
  std::string dg = detail::get_string(is, path);
  if (digest != nullptr) *digest = dg;
  return model;
}

}  // namespace cove
