#include <charconv>
#include <functional>
#include <sstream>

#include "dpuc/hw.hpp"

namespace dpuc::hw {

namespace {

struct IntField {
  const char* key;
  int Instruction::*member;
};

constexpr IntField kIntFields[] = {
    {"rows", &Instruction::rows},       {"cols", &Instruction::cols},     {"ch", &Instruction::ch},
    {"in_rows", &Instruction::in_rows}, {"in_cols", &Instruction::in_cols}, {"in_ch", &Instruction::in_ch},
    {"kh", &Instruction::kh},           {"kw", &Instruction::kw},         {"sh", &Instruction::sh},
    {"sw", &Instruction::sw},           {"org_h", &Instruction::org_h},   {"org_w", &Instruction::org_w},
    {"shift", &Instruction::shift},     {"shift_a", &Instruction::shift_a}, {"shift_b", &Instruction::shift_b},
    {"factor", &Instruction::factor},
};

struct OperandField {
  const char* key;
  Operand Instruction::*member;
};

constexpr OperandField kOperandFields[] = {
    {"src", &Instruction::src}, {"src2", &Instruction::src2}, {"dst", &Instruction::dst},
    {"wgt", &Instruction::wgt}, {"bias", &Instruction::bias},
};

std::string_view space_name(Space s) {
  switch (s) {
    case Space::Ddr: return "ddr";
    case Space::Fm: return "fm";
    case Space::Pm: return "pm";
    default: return "none";
  }
}

std::string mask(TypeSet t) {
  std::string s = "0b";
  for (int b = 3; b >= 0; --b) s += (t.bits >> b) & 1 ? '1' : '0';
  return s;
}

std::string operand_text(const Operand& o) {
  std::ostringstream s;
  s << space_name(o.space) << o.mem << ':' << o.base << ':' << o.size << ':' << o.offset << ':' << o.row_pitch << ':'
    << o.pix_pitch;
  return s.str();
}

int64_t parse_int(std::string_view s, int line) {
  int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw AsmError(line, "bad integer '" + std::string(s) + "'");
  return v;
}

TypeSet parse_mask(std::string_view s, int line) {
  if (s.size() != 6 || s.substr(0, 2) != "0b") throw AsmError(line, "bad dependency mask '" + std::string(s) + "'");
  TypeSet t;
  for (int i = 0; i < 4; ++i) {
    char c = s[2 + i];
    if (c != '0' && c != '1') throw AsmError(line, "bad dependency mask '" + std::string(s) + "'");
    if (c == '1') t.bits |= static_cast<uint8_t>(1u << (3 - i));
  }
  return t;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  size_t start = 0;
  for (size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      if (sep != ' ' || i > start) out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

Operand parse_operand(std::string_view s, int line) {
  auto parts = split(s, ':');
  if (parts.size() != 6) throw AsmError(line, "bad operand '" + std::string(s) + "'");
  Operand o;
  std::string_view head = parts[0];
  size_t digits = head.find_first_of("0123456789");
  if (digits == std::string_view::npos) throw AsmError(line, "operand without memory index");
  auto sp = head.substr(0, digits);
  if (sp == "ddr") o.space = Space::Ddr;
  else if (sp == "fm") o.space = Space::Fm;
  else if (sp == "pm") o.space = Space::Pm;
  else throw AsmError(line, "unknown address space '" + std::string(sp) + "'");
  o.mem = static_cast<int>(parse_int(head.substr(digits), line));
  o.base = parse_int(parts[1], line);
  o.size = parse_int(parts[2], line);
  o.offset = parse_int(parts[3], line);
  o.row_pitch = parse_int(parts[4], line);
  o.pix_pitch = parse_int(parts[5], line);
  return o;
}

bool sub_allowed(OpType t, SubOp s) {
  if (s == SubOp::Noop) return true;
  switch (t) {
    case OpType::Load: return s == SubOp::Act || s == SubOp::Weight;
    case OpType::Save: return s == SubOp::Act;
    case OpType::Conv: return s == SubOp::Conv;
    case OpType::Misc: return s == SubOp::MaxPool || s == SubOp::Eltwise || s == SubOp::Move || s == SubOp::Upsample;
  }
  return false;
}

}  // namespace

std::string emit_assembly(const Program& p) {
  std::ostringstream out;
  for (auto& s : p.segments) out << ".segment " << s.name << ' ' << s.base << ' ' << s.size << '\n';
  for (auto& t : p.tensors)
    out << ".tensor " << t.role << ' ' << t.name << ' ' << t.base << ' ' << t.h << ' ' << t.w << ' ' << t.c << ' '
        << t.row_pitch << ' ' << t.pix_pitch << ' ' << t.exp << '\n';
  const Instruction def;
  for (auto& ins : p.code) {
    out << to_string(ins.type) << ' ' << mask(ins.dpon) << ' ' << mask(ins.dpby) << ' ' << to_string(ins.sub);
    for (auto& f : kOperandFields)
      if (ins.*f.member != def.*f.member) out << ' ' << f.key << '=' << operand_text(ins.*f.member);
    for (auto& f : kIntFields)
      if (ins.*f.member != def.*f.member) out << ' ' << f.key << '=' << ins.*f.member;
    if (ins.relu) out << " relu=1";
    if (ins.init) out << " init=1";
    out << '\n';
  }
  return out.str();
}

Program parse_assembly(std::string_view text) {
  Program p;
  int line_no = 0;
  for (auto raw : split(text, '\n')) {
    ++line_no;
    std::string_view line = raw;
    if (auto h = line.find('#'); h != std::string_view::npos) line = line.substr(0, h);
    auto tok = split(line, ' ');
    if (tok.empty()) continue;
    if (tok[0] == ".segment") {
      if (tok.size() != 4) throw AsmError(line_no, ".segment needs name, base and size");
      p.segments.push_back({std::string(tok[1]), parse_int(tok[2], line_no), parse_int(tok[3], line_no)});
      continue;
    }
    if (tok[0] == ".tensor") {
      if (tok.size() != 10) throw AsmError(line_no, ".tensor needs 9 fields");
      TensorPlacement t;
      t.role = tok[1];
      if (t.role != "input" && t.role != "output") throw AsmError(line_no, "tensor role must be input or output");
      t.name = tok[2];
      t.base = parse_int(tok[3], line_no);
      t.h = static_cast<int>(parse_int(tok[4], line_no));
      t.w = static_cast<int>(parse_int(tok[5], line_no));
      t.c = static_cast<int>(parse_int(tok[6], line_no));
      t.row_pitch = parse_int(tok[7], line_no);
      t.pix_pitch = parse_int(tok[8], line_no);
      t.exp = static_cast<int>(parse_int(tok[9], line_no));
      p.tensors.push_back(t);
      continue;
    }
    if (tok.size() < 4) throw AsmError(line_no, "instruction needs opcode, two masks and a sub-operation");
    Instruction ins;
    bool found = false;
    for (OpType t : kAllTypes)
      if (tok[0] == to_string(t)) ins.type = t, found = true;
    if (!found) throw AsmError(line_no, "unknown opcode '" + std::string(tok[0]) + "'");
    ins.dpon = parse_mask(tok[1], line_no);
    ins.dpby = parse_mask(tok[2], line_no);
    found = false;
    for (int s = 0; s <= static_cast<int>(SubOp::Noop); ++s)
      if (tok[3] == to_string(static_cast<SubOp>(s))) ins.sub = static_cast<SubOp>(s), found = true;
    if (!found || !sub_allowed(ins.type, ins.sub))
      throw AsmError(line_no, "invalid sub-operation '" + std::string(tok[3]) + "' for " + std::string(tok[0]));
    for (size_t i = 4; i < tok.size(); ++i) {
      auto eq = tok[i].find('=');
      if (eq == std::string_view::npos) throw AsmError(line_no, "expected key=value, got '" + std::string(tok[i]) + "'");
      auto key = tok[i].substr(0, eq), val = tok[i].substr(eq + 1);
      bool known = false;
      for (auto& f : kOperandFields)
        if (key == f.key) ins.*f.member = parse_operand(val, line_no), known = true;
      for (auto& f : kIntFields)
        if (key == f.key) ins.*f.member = static_cast<int>(parse_int(val, line_no)), known = true;
      if (key == "relu") ins.relu = parse_int(val, line_no) != 0, known = true;
      if (key == "init") ins.init = parse_int(val, line_no) != 0, known = true;
      if (!known) throw AsmError(line_no, "unknown field '" + std::string(key) + "'");
    }
    p.code.push_back(ins);
  }
  return p;
}

}  // namespace dpuc::hw
