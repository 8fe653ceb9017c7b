#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "btnn/common.hpp"
#include "btnn/tensors.hpp"

namespace btnn {

enum class LayerKind : std::uint8_t {
  FirstConvBWN = 0,  // real input x binarized weights, bn then sign
  BitConv = 1,
  OrPool = 2,
  BitFc = 3,
  LastFc = 4,  // bn without sign; emits the logits
};

inline const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::FirstConvBWN: return "first_conv";
    case LayerKind::BitConv: return "bit_conv";
    case LayerKind::OrPool: return "or_pool";
    case LayerKind::BitFc: return "bit_fc";
    case LayerKind::LastFc: return "last_fc";
  }
  return "?";
}

struct LayerSpec {
  LayerKind kind = LayerKind::BitConv;
  // conv
  std::size_t kh = 0, kw = 0, out_channels = 0, stride = 1, pad = 0;
  // pool
  std::size_t window = 0, pool_stride = 0;
  // fc
  std::size_t units = 0;
  // resolved during validation
  std::size_t in_h = 0, in_w = 0, in_channels = 0;
  std::size_t out_h = 0, out_w = 0;
  bool residual_out = false;
  bool residual_in = false;
  int shortcut_from = -1;

  Conv2dGeometry conv_geometry() const { return {kh, kw, stride, pad}; }
};

struct Shortcut {
  std::size_t from = 0, to = 0;
};

struct ModelSpec {
  std::string name;
  std::size_t in_h = 0, in_w = 0, in_c = 0;
  std::size_t classes = 0;
  double epsilon = 1e-5;
  std::vector<LayerSpec> layers;
  std::vector<Shortcut> shortcuts;
};

inline std::string layer_label(const ModelSpec& m, std::size_t i) {
  return "layer " + std::to_string(i) + " (" + kind_name(m.layers[i].kind) + ")";
}

/// A layer needs explicit bn at run time (instead of folded thresholds) when
/// it is the first or last layer or sits on a shortcut edge.
inline bool needs_bn_route(const LayerSpec& l) {
  return l.kind == LayerKind::FirstConvBWN || l.kind == LayerKind::LastFc ||
         l.residual_in || l.residual_out;
}

namespace detail {

inline std::vector<std::string> split_top(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  int depth = 0;
  for (char ch : s) {
    if (ch == '(') ++depth;
    if (ch == ')') --depth;
    if (depth < 0) throw invalid_input("model: unbalanced parens in '" + s + "'");
    if (ch == sep && depth == 0) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (depth != 0) throw invalid_input("model: unbalanced parens in '" + s + "'");
  parts.push_back(cur);
  return parts;
}

// True when the token is fully wrapped: "(...)" with the first paren closing
// at the end (so "(A)-(B)" does not count).
inline bool fully_parenthesized(const std::string& s) {
  if (s.size() < 2 || s.front() != '(' || s.back() != ')') return false;
  int depth = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '(') ++depth;
    if (s[i] == ')') --depth;
    if (depth == 0) return i == s.size() - 1;
  }
  return false;
}

inline std::size_t parse_uint(const std::string& s, const std::string& tok) {
  if (s.empty()) throw invalid_input("model: bad token '" + tok + "'");
  std::size_t v = 0;
  for (char ch : s) {
    if (!std::isdigit(static_cast<unsigned char>(ch)))
      throw invalid_input("model: bad token '" + tok + "'");
    v = v * 10 + static_cast<std::size_t>(ch - '0');
  }
  return v;
}

inline void parse_atom(const std::string& tok, std::vector<LayerSpec>& out) {
  LayerSpec l;
  if (tok.size() > 2 && tok.substr(tok.size() - 2) == "FC") {
    l.kind = LayerKind::BitFc;
    l.units = parse_uint(tok.substr(0, tok.size() - 2), tok);
    if (l.units == 0) throw invalid_input("model: zero units in '" + tok + "'");
    out.push_back(l);
    return;
  }
  if (tok.size() > 1 && (tok[0] == 'P' || (tok.size() > 2 && tok[0] == 'M' && tok[1] == 'P'))) {
    const std::size_t k = parse_uint(tok.substr(tok[0] == 'M' ? 2 : 1), tok);
    if (k == 0) throw invalid_input("model: zero pool window in '" + tok + "'");
    l.kind = LayerKind::OrPool;
    l.window = k;
    l.pool_stride = k;
    out.push_back(l);
    return;
  }
  const std::size_t c_pos = tok.find('C');
  if (c_pos != std::string::npos && c_pos > 0) {
    l.kind = LayerKind::BitConv;
    l.out_channels = parse_uint(tok.substr(0, c_pos), tok);
    std::string rest = tok.substr(c_pos + 1);
    const std::size_t slash = rest.find('/');
    if (slash != std::string::npos) {
      l.stride = parse_uint(rest.substr(slash + 1), tok);
      rest = rest.substr(0, slash);
    }
    l.kh = l.kw = parse_uint(rest, tok);
    if (l.out_channels == 0 || l.kh == 0 || l.stride == 0)
      throw invalid_input("model: bad token '" + tok + "'");
    l.pad = l.kh / 2;
    out.push_back(l);
    return;
  }
  throw invalid_input("model: bad token '" + tok + "'");
}

inline void parse_token(const std::string& tok, std::vector<LayerSpec>& out) {
  if (tok.empty()) throw invalid_input("model: empty token");
  const auto parts = split_top(tok, '-');
  if (parts.size() > 1) {
    for (const auto& p : parts) parse_token(p, out);
    return;
  }
  std::size_t i = 0;
  while (i < tok.size() && std::isdigit(static_cast<unsigned char>(tok[i]))) ++i;
  if (i > 0 && i < tok.size() && tok[i] == 'x') {
    const std::size_t n = parse_uint(tok.substr(0, i), tok);
    if (n == 0) throw invalid_input("model: zero repeat in '" + tok + "'");
    const std::string rest = tok.substr(i + 1);
    for (std::size_t rep = 0; rep < n; ++rep) parse_token(rest, out);
    return;
  }
  if (fully_parenthesized(tok)) {
    parse_token(tok.substr(1, tok.size() - 2), out);
    return;
  }
  parse_atom(tok, out);
}

}  // namespace detail

/// Expands tokens, appends the final classifier, resolves every layer's
/// input/output dims and marks shortcut ports. Throws validation_error
/// naming the offending layer.
inline void resolve_model(ModelSpec& m) {
  if (m.in_h == 0 || m.in_w == 0 || m.in_c == 0)
    throw validation_error("model '" + m.name + "': zero input dimension");
  if (m.classes < 2) throw validation_error("model '" + m.name + "': need at least 2 classes");
  if (!(m.epsilon > 0.0) || !std::isfinite(m.epsilon))
    throw validation_error("model '" + m.name + "': epsilon must be positive and finite");
  if (m.layers.empty()) throw validation_error("model '" + m.name + "': no layers");

  if (m.layers.front().kind == LayerKind::BitConv)
    m.layers.front().kind = LayerKind::FirstConvBWN;
  else if (m.layers.front().kind != LayerKind::BitFc)
    throw validation_error("model '" + m.name + "': first layer must be conv or fc");

  LayerSpec last;
  last.kind = LayerKind::LastFc;
  last.units = m.classes;
  m.layers.push_back(last);

  std::size_t h = m.in_h, w = m.in_w, c = m.in_c;
  bool fc_seen = false;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    LayerSpec& l = m.layers[i];
    l.in_h = h;
    l.in_w = w;
    l.in_channels = c;
    switch (l.kind) {
      case LayerKind::FirstConvBWN:
      case LayerKind::BitConv: {
        if (fc_seen)
          throw validation_error(layer_label(m, i) + ": conv after fc layers");
        try {
          const auto geo = l.conv_geometry();
          geo.validate();
          l.out_h = geo.out_h(h);
          l.out_w = geo.out_w(w);
        } catch (const std::exception& e) {
          throw validation_error(layer_label(m, i) + ": " + e.what());
        }
        h = l.out_h;
        w = l.out_w;
        c = l.out_channels;
        break;
      }
      case LayerKind::OrPool: {
        if (fc_seen)
          throw validation_error(layer_label(m, i) + ": pool after fc layers");
        if (h < l.window || w < l.window || (h - l.window) % l.pool_stride != 0 ||
            (w - l.window) % l.pool_stride != 0)
          throw validation_error(layer_label(m, i) + ": window " +
                                 std::to_string(l.window) + "/" +
                                 std::to_string(l.pool_stride) +
                                 " does not cover " + std::to_string(h) + "x" +
                                 std::to_string(w) + " exactly");
        l.out_h = (h - l.window) / l.pool_stride + 1;
        l.out_w = (w - l.window) / l.pool_stride + 1;
        l.out_channels = c;
        h = l.out_h;
        w = l.out_w;
        break;
      }
      case LayerKind::BitFc:
      case LayerKind::LastFc: {
        if (!fc_seen) {
          l.in_channels = h * w * c;  // flattened features
          fc_seen = true;
        } else {
          l.in_channels = c;
        }
        l.out_h = l.out_w = 1;
        h = w = 1;
        c = l.units;
        break;
      }
    }
  }

  std::vector<bool> used_to(m.layers.size(), false);
  for (const Shortcut& sc : m.shortcuts) {
    if (sc.from >= m.layers.size() || sc.to >= m.layers.size())
      throw validation_error("model '" + m.name + "': shortcut index out of range");
    if (sc.from >= sc.to)
      throw validation_error("model '" + m.name + "': shortcut must go forward (" +
                             std::to_string(sc.from) + " -> " + std::to_string(sc.to) + ")");
    LayerSpec& from = m.layers[sc.from];
    LayerSpec& to = m.layers[sc.to];
    const bool from_conv = from.kind == LayerKind::FirstConvBWN || from.kind == LayerKind::BitConv;
    if (!from_conv || to.kind != LayerKind::BitConv)
      throw validation_error("model '" + m.name + "': shortcut " + std::to_string(sc.from) +
                             " -> " + std::to_string(sc.to) + " must connect conv layers");
    if (used_to[sc.to])
      throw validation_error(layer_label(m, sc.to) + ": multiple incoming shortcuts");
    used_to[sc.to] = true;
    // type-A: spatial may halve, channels may zero-pad upward
    const bool same = from.out_h == to.out_h && from.out_w == to.out_w;
    const bool halved = from.out_h == 2 * to.out_h && from.out_w == 2 * to.out_w;
    if (!same && !halved)
      throw validation_error(layer_label(m, sc.to) + ": shortcut spatial dims " +
                             std::to_string(from.out_h) + "x" + std::to_string(from.out_w) +
                             " do not reach " + std::to_string(to.out_h) + "x" +
                             std::to_string(to.out_w));
    if (from.out_channels > to.out_channels)
      throw validation_error(layer_label(m, sc.to) + ": shortcut would drop channels");
    from.residual_out = true;
    to.residual_in = true;
    to.shortcut_from = static_cast<int>(sc.from);
  }
}

/// Builds a model straight from a token string, e.g. "2x128C3-MP2-1024FC".
inline ModelSpec make_model(const std::string& name, const std::string& tokens,
                            std::size_t in_h, std::size_t in_w, std::size_t in_c,
                            std::size_t classes,
                            std::vector<Shortcut> shortcuts = {},
                            double epsilon = 1e-5) {
  ModelSpec m;
  m.name = name;
  m.in_h = in_h;
  m.in_w = in_w;
  m.in_c = in_c;
  m.classes = classes;
  m.epsilon = epsilon;
  m.shortcuts = std::move(shortcuts);
  detail::parse_token(tokens, m.layers);
  resolve_model(m);
  return m;
}

inline ModelSpec parse_model(const nlohmann::json& j) {
  ModelSpec m;
  try {
    m.name = j.at("name").get<std::string>();
    const auto& in = j.at("input");
    m.in_h = in.at("height").get<std::size_t>();
    m.in_w = in.at("width").get<std::size_t>();
    m.in_c = in.at("channels").get<std::size_t>();
    m.classes = j.at("classes").get<std::size_t>();
    if (j.contains("epsilon")) m.epsilon = j.at("epsilon").get<double>();
    for (const auto& tok : j.at("layers"))
      detail::parse_token(tok.get<std::string>(), m.layers);
    if (j.contains("shortcuts"))
      for (const auto& sc : j.at("shortcuts"))
        m.shortcuts.push_back({sc.at("from").get<std::size_t>(), sc.at("to").get<std::size_t>()});
  } catch (const nlohmann::json::exception& e) {
    throw invalid_input(std::string("model: bad json: ") + e.what());
  }
  resolve_model(m);
  return m;
}

inline ModelSpec parse_model_text(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw invalid_input("model: json parse failed");
  return parse_model(j);
}

}  // namespace btnn
