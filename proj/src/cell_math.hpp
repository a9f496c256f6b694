#pragma once

// Cell and head equations written once against a small algebra backend, so
// the eager path (inference) and the recorded path (training) cannot drift.

#include <cstddef>
#include <vector>

#include "dkts/ktmodel.hpp"

namespace dkts::detail {

template <class V>
struct GateView {
  V W, U, b;
};

template <class V>
struct CellState {
  V h;
  V c;
  bool has_c = false;
};

template <class B, class V = typename B::Value>
V gate_pre(B& be, const GateView<V>& g, V x, V h) {
  return be.add(be.add(be.matmul(x, g.W), be.matmul(h, g.U)), g.b);
}

template <class B, class V = typename B::Value>
CellState<V> cell_step(B& be, CellType cell, const std::vector<GateView<V>>& g, V x, const CellState<V>& s) {
  switch (cell) {
    case CellType::Rnn:
      return {be.tanh(gate_pre(be, g[0], x, s.h)), V{}, false};
    case CellType::Lstm: {
      V i = be.sigmoid(gate_pre(be, g[0], x, s.h));
      V f = be.sigmoid(gate_pre(be, g[1], x, s.h));
      V o = be.sigmoid(gate_pre(be, g[2], x, s.h));
      V cand = be.tanh(gate_pre(be, g[3], x, s.h));
      V c = be.add(be.mul(f, s.c), be.mul(i, cand));
      return {be.mul(o, be.tanh(c)), c, true};
    }
    case CellType::Gru: {
      V z = be.sigmoid(gate_pre(be, g[0], x, s.h));
      V r = be.sigmoid(gate_pre(be, g[1], x, s.h));
      V cand = be.tanh(be.add(be.add(be.matmul(x, g[2].W), be.matmul(be.mul(r, s.h), g[2].U)), g[2].b));
      // (1 - z) h + z cand, arranged as h + z (cand - h).
      return {be.add(s.h, be.mul(z, be.sub(cand, s.h))), V{}, false};
    }
  }
  return s;
}

template <class B, class V = typename B::Value>
V head(B& be, V h, V W, V b) {
  return be.sigmoid(be.add(be.matmul(h, W), b));
}

}  // namespace dkts::detail
