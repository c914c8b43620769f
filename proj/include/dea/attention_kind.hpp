#pragma once

#include <string>

#include "dea/error.hpp"

namespace dea {

enum class AttentionKind { self_attention, multi_view, cross_domain };

inline const char* attention_kind_name(AttentionKind kind) {
  switch (kind) {
    case AttentionKind::self_attention: return "self";
    case AttentionKind::multi_view: return "multi_view";
    case AttentionKind::cross_domain: return "cross_domain";
  }
  return "unknown";
}

inline AttentionKind attention_kind_from_name(const std::string& name) {
  if (name == "self") return AttentionKind::self_attention;
  if (name == "multi_view") return AttentionKind::multi_view;
  if (name == "cross_domain") return AttentionKind::cross_domain;
  raise(Errc::config_error, "unknown attention kind: " + name);
}

inline long tiling_factor(AttentionKind kind, long n_views, long n_domains) {
  switch (kind) {
    case AttentionKind::self_attention: return 1;
    case AttentionKind::multi_view: return n_views;
    case AttentionKind::cross_domain: return n_domains;
  }
  return 1;
}

}  // namespace dea
