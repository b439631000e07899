#include "dpuc/hw.hpp"
#include "json.hpp"

namespace dpuc::hw {

using nlohmann::json;

void MachineConfig::validate() const {
  if (fm_memories < 3) throw ParseError("config: at least 3 feature-map memories are required");
  if (fm_banks <= 0 || fm_bank_rows <= 0 || fm_row_bytes <= 0) throw ParseError("config: memory geometry must be positive");
  if (pm_bytes <= 0 || gamma <= 0) throw ParseError("config: pm_bytes and gamma must be positive");
  if (h_conv <= 0 || h_pool <= 0 || h_eltwise <= 0) throw ParseError("config: preferred tile heights must be positive");
  if (ddr_bytes_per_cycle <= 0 || conv_macs_per_cycle <= 0 || misc_elems_per_cycle <= 0 || issue_overhead < 0)
    throw ParseError("config: rates must be positive");
}

MachineConfig config_from_json(std::string_view text) {
  MachineConfig c;
  try {
    const json j = json::parse(text);
    c.fm_memories = j.value("fm_memories", c.fm_memories);
    c.fm_banks = j.value("fm_banks", c.fm_banks);
    c.fm_bank_rows = j.value("fm_bank_rows", c.fm_bank_rows);
    c.fm_row_bytes = j.value("fm_row_bytes", c.fm_row_bytes);
    c.pm_bytes = j.value("pm_bytes", c.pm_bytes);
    c.gamma = j.value("gamma", c.gamma);
    c.h_conv = j.value("h_conv", c.h_conv);
    c.h_pool = j.value("h_pool", c.h_pool);
    c.h_eltwise = j.value("h_eltwise", c.h_eltwise);
    c.ddr_bytes_per_cycle = j.value("ddr_bytes_per_cycle", c.ddr_bytes_per_cycle);
    c.conv_macs_per_cycle = j.value("conv_macs_per_cycle", c.conv_macs_per_cycle);
    c.misc_elems_per_cycle = j.value("misc_elems_per_cycle", c.misc_elems_per_cycle);
    c.issue_overhead = j.value("issue_overhead", c.issue_overhead);
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed machine config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string to_json(const MachineConfig& c) {
  json j{{"fm_memories", c.fm_memories},
         {"fm_banks", c.fm_banks},
         {"fm_bank_rows", c.fm_bank_rows},
         {"fm_row_bytes", c.fm_row_bytes},
         {"pm_bytes", c.pm_bytes},
         {"gamma", c.gamma},
         {"h_conv", c.h_conv},
         {"h_pool", c.h_pool},
         {"h_eltwise", c.h_eltwise},
         {"ddr_bytes_per_cycle", c.ddr_bytes_per_cycle},
         {"conv_macs_per_cycle", c.conv_macs_per_cycle},
         {"misc_elems_per_cycle", c.misc_elems_per_cycle},
         {"issue_overhead", c.issue_overhead}};
  return j.dump(1);
}

MachineConfig load_config(const std::string& path) {
  auto bytes = read_file(path);
  return config_from_json(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::string_view to_string(OpType t) {
  switch (t) {
    case OpType::Load: return "LOAD";
    case OpType::Save: return "SAVE";
    case OpType::Conv: return "CONV";
    case OpType::Misc: return "MISC";
  }
  return "?";
}

std::string_view to_string(SubOp s) {
  switch (s) {
    case SubOp::Act: return "act";
    case SubOp::Weight: return "weight";
    case SubOp::Conv: return "conv";
    case SubOp::MaxPool: return "maxpool";
    case SubOp::Eltwise: return "eltwise";
    case SubOp::Move: return "move";
    case SubOp::Upsample: return "upsample";
    case SubOp::Noop: return "noop";
  }
  return "?";
}

int64_t Program::ddr_bytes() const {
  int64_t end = 0;
  for (auto& s : segments) end = std::max(end, s.base + s.size);
  return end;
}

const Segment& Program::segment(const std::string& name) const {
  for (auto& s : segments)
    if (s.name == name) return s;
  throw Error("program has no segment '" + name + "'");
}

int64_t work_units(const Instruction& ins) {
  if (ins.is_noop()) return 0;
  const int64_t out = int64_t{ins.rows} * ins.cols * ins.ch;
  switch (ins.type) {
    case OpType::Load:
    case OpType::Save:
      return out;
    case OpType::Conv:
      return out * ins.kh * ins.kw * ins.in_ch;
    case OpType::Misc:
      return out;
  }
  return 0;
}

int64_t instruction_cost(const Instruction& ins, const MachineConfig& cfg) {
  const int64_t w = work_units(ins);
  int64_t rate = 1;
  switch (ins.type) {
    case OpType::Load:
    case OpType::Save:
      rate = cfg.ddr_bytes_per_cycle;
      break;
    case OpType::Conv:
      rate = cfg.conv_macs_per_cycle;
      break;
    case OpType::Misc:
      rate = cfg.misc_elems_per_cycle;
      break;
  }
  return ceil_div(w, rate) + cfg.issue_overhead;
}

std::string_view color_class(const Instruction& ins) {
  if (ins.is_noop()) return "gray";
  switch (ins.type) {
    case OpType::Load: return ins.sub == SubOp::Weight ? "black" : "blue";
    case OpType::Save: return "purple";
    case OpType::Conv: return ins.init ? "red" : "purple";
    case OpType::Misc: return ins.sub == SubOp::MaxPool ? "green" : "yellow";
  }
  return "gray";
}

}  // namespace dpuc::hw
