#include "tiedmt/ops.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>

namespace tiedmt {

namespace {

using EMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

bool grad_enabled(std::initializer_list<const Tensor*> inputs) {
  if (Tape::current() == nullptr) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

Tensor make_output(std::vector<int> shape, bool track) {
  Tensor out = Tensor::zeros(std::move(shape), track);
  return out;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    tensor_error(std::string(op) + ": shape mismatch");
}

EMap map2d(Tensor& t) { return EMap(t.data().data(), t.rows(), t.cols()); }
ECMap cmap2d(const Tensor& t) {
  return ECMap(t.data().data(), t.rows(), t.cols());
}
EMap grad_map2d(Tensor& t) { return EMap(t.grad().data(), t.rows(), t.cols()); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  bool track = grad_enabled({&a, &b});
  Tensor out = make_output(a.shape(), track);
  for (int64_t i = 0; i < a.size(); ++i)
    out.data()[i] = a.data()[i] + b.data()[i];
  if (track) {
    Tape::current()->record([an = a.shared_node(), bn = b.shared_node(),
                             on = out.shared_node()] {
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  bool track = grad_enabled({&a, &b});
  Tensor out = make_output(a.shape(), track);
  for (int64_t i = 0; i < a.size(); ++i)
    out.data()[i] = a.data()[i] - b.data()[i];
  if (track) {
    Tape::current()->record([an = a.shared_node(), bn = b.shared_node(),
                             on = out.shared_node()] {
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] -= on->grad[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  bool track = grad_enabled({&a, &b});
  Tensor out = make_output(a.shape(), track);
  for (int64_t i = 0; i < a.size(); ++i)
    out.data()[i] = a.data()[i] * b.data()[i];
  if (track) {
    Tape::current()->record([an = a.shared_node(), bn = b.shared_node(),
                             on = out.shared_node()] {
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < on->grad.size(); ++i)
          an->grad[i] += on->grad[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < on->grad.size(); ++i)
          bn->grad[i] += on->grad[i] * an->value[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, Real s) {
  bool track = grad_enabled({&a});
  Tensor out = make_output(a.shape(), track);
  for (int64_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * s;
  if (track) {
    Tape::current()->record([an = a.shared_node(), on = out.shared_node(), s] {
      if (!an->requires_grad) return;
      an->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i)
        an->grad[i] += on->grad[i] * s;
    });
  }
  return out;
}

Tensor add_bias(const Tensor& m, const Tensor& bias) {
  if (m.shape().size() != 2 || bias.shape().size() != 1 ||
      bias.shape()[0] != m.cols())
    tensor_error("add_bias: expected [r,c] matrix and [c] bias");
  bool track = grad_enabled({&m, &bias});
  Tensor out = make_output(m.shape(), track);
  const int r = m.rows(), c = m.cols();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out.data()[static_cast<size_t>(i) * c + j] =
          m.data()[static_cast<size_t>(i) * c + j] + bias.data()[j];
  if (track) {
    Tape::current()->record([mn = m.shared_node(), bn = bias.shared_node(),
                             on = out.shared_node(), r, c] {
      if (mn->requires_grad) {
        mn->ensure_grad();
        for (size_t i = 0; i < on->grad.size(); ++i) mn->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j)
            bn->grad[j] += on->grad[static_cast<size_t>(i) * c + j];
      }
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.rows())
    tensor_error("matmul: incompatible shapes");
  bool track = grad_enabled({&a, &b});
  Tensor out = make_output({a.rows(), b.cols()}, track);
  map2d(out).noalias() = cmap2d(a) * cmap2d(b);
  if (track) {
    Tape::current()->record([an = a.shared_node(), bn = b.shared_node(),
                             on = out.shared_node()] {
      ECMap ag(on->grad.data(), on->shape[0], on->shape[1]);
      if (an->requires_grad) {
        an->ensure_grad();
        EMap(an->grad.data(), an->shape[0], an->shape[1]).noalias() +=
            ag * ECMap(bn->value.data(), bn->shape[0], bn->shape[1]).transpose();
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        EMap(bn->grad.data(), bn->shape[0], bn->shape[1]).noalias() +=
            ECMap(an->value.data(), an->shape[0], an->shape[1]).transpose() * ag;
      }
    });
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.cols())
    tensor_error("matmul_nt: incompatible shapes");
  bool track = grad_enabled({&a, &b});
  Tensor out = make_output({a.rows(), b.rows()}, track);
  map2d(out).noalias() = cmap2d(a) * cmap2d(b).transpose();
  if (track) {
    Tape::current()->record([an = a.shared_node(), bn = b.shared_node(),
                             on = out.shared_node()] {
      ECMap ag(on->grad.data(), on->shape[0], on->shape[1]);
      if (an->requires_grad) {
        an->ensure_grad();
        EMap(an->grad.data(), an->shape[0], an->shape[1]).noalias() +=
            ag * ECMap(bn->value.data(), bn->shape[0], bn->shape[1]);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        EMap(bn->grad.data(), bn->shape[0], bn->shape[1]).noalias() +=
            ag.transpose() * ECMap(an->value.data(), an->shape[0], an->shape[1]);
      }
    });
  }
  return out;
}

Tensor relu(const Tensor& a) {
  bool track = grad_enabled({&a});
  Tensor out = make_output(a.shape(), track);
  for (int64_t i = 0; i < a.size(); ++i)
    out.data()[i] = a.data()[i] > Real{0} ? a.data()[i] : Real{0};
  if (track) {
    Tape::current()->record([an = a.shared_node(), on = out.shared_node()] {
      if (!an->requires_grad) return;
      an->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i)
        if (an->value[i] > Real{0}) an->grad[i] += on->grad[i];
    });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  bool track = grad_enabled({&a});
  Tensor out = make_output({1}, track);
  Real total = 0;
  for (int64_t i = 0; i < a.size(); ++i) total += a.data()[i];
  out.data()[0] = total;
  if (track) {
    Tape::current()->record([an = a.shared_node(), on = out.shared_node()] {
      if (!an->requires_grad) return;
      an->ensure_grad();
      for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += on->grad[0];
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& a) {
  bool track = grad_enabled({&a});
  Tensor out = make_output(a.shape(), track);
  for (int64_t i = 0; i < a.size(); ++i) {
    Real x = a.data()[i];
    out.data()[i] = x >= Real{0} ? Real{1} / (Real{1} + std::exp(-x))
                                 : std::exp(x) / (Real{1} + std::exp(x));
  }
  if (track) {
    Tape::current()->record([an = a.shared_node(), on = out.shared_node()] {
      if (!an->requires_grad) return;
      an->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) {
        Real y = on->value[i];
        an->grad[i] += on->grad[i] * y * (Real{1} - y);
      }
    });
  }
  return out;
}

Tensor average(const std::vector<Tensor>& scalars) {
  if (scalars.empty()) tensor_error("average: empty input");
  bool track = false;
  for (const Tensor& t : scalars) {
    if (t.size() != 1) tensor_error("average: inputs must be scalars");
    if (Tape::current() && t.requires_grad()) track = true;
  }
  Tensor out = make_output({1}, track);
  Real sum = 0;
  for (const Tensor& t : scalars) sum += t.data()[0];
  out.data()[0] = sum / static_cast<Real>(scalars.size());
  if (track) {
    std::vector<std::shared_ptr<TensorNode>> nodes;
    nodes.reserve(scalars.size());
    for (const Tensor& t : scalars) nodes.push_back(t.shared_node());
    Tape::current()->record([nodes, on = out.shared_node()] {
      Real g = on->grad[0] / static_cast<Real>(nodes.size());
      for (auto& n : nodes) {
        if (!n->requires_grad) continue;
        n->ensure_grad();
        n->grad[0] += g;
      }
    });
  }
  return out;
}

Tensor softmax_rows(const Tensor& m) {
  if (m.shape().size() != 2 || m.cols() < 1)
    tensor_error("softmax_rows: expected a matrix with >= 1 column");
  const int r = m.rows(), c = m.cols();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      if (!std::isfinite(m.data()[static_cast<size_t>(i) * c + j]))
        tensor_error("softmax_rows: non-finite value in row " +
                     std::to_string(i));
  bool track = grad_enabled({&m});
  Tensor out = make_output(m.shape(), track);
  for (int i = 0; i < r; ++i) {
    const Real* row = m.data().data() + static_cast<size_t>(i) * c;
    Real* orow = out.data().data() + static_cast<size_t>(i) * c;
    Real mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    Real sum = 0;
    for (int j = 0; j < c; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    for (int j = 0; j < c; ++j) orow[j] /= sum;
  }
  if (track) {
    Tape::current()->record([mn = m.shared_node(), on = out.shared_node(), r, c] {
      if (!mn->requires_grad) return;
      mn->ensure_grad();
      for (int i = 0; i < r; ++i) {
        const Real* y = on->value.data() + static_cast<size_t>(i) * c;
        const Real* dy = on->grad.data() + static_cast<size_t>(i) * c;
        Real* dx = mn->grad.data() + static_cast<size_t>(i) * c;
        Real dot = 0;
        for (int j = 0; j < c; ++j) dot += dy[j] * y[j];
        for (int j = 0; j < c; ++j) dx[j] += y[j] * (dy[j] - dot);
      }
    });
  }
  return out;
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       Real eps) {
  if (x.shape().size() != 2) tensor_error("layer_norm_rows: expected matrix");
  const int r = x.rows(), c = x.cols();
  if (gain.shape() != std::vector<int>{c} || bias.shape() != std::vector<int>{c})
    tensor_error("layer_norm_rows: gain/bias must be [cols]");
  bool track = grad_enabled({&x, &gain, &bias});
  Tensor out = make_output(x.shape(), track);
  std::vector<Real> inv_std(static_cast<size_t>(r));
  std::vector<Real> normed(track ? x.data().size() : 0);
  for (int i = 0; i < r; ++i) {
    const Real* row = x.data().data() + static_cast<size_t>(i) * c;
    Real* orow = out.data().data() + static_cast<size_t>(i) * c;
    Real mean = 0;
    for (int j = 0; j < c; ++j) mean += row[j];
    mean /= c;
    Real var = 0;
    for (int j = 0; j < c; ++j) {
      Real d = row[j] - mean;
      var += d * d;
    }
    var /= c;
    Real inv = Real{1} / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(i)] = inv;
    for (int j = 0; j < c; ++j) {
      Real nj = (row[j] - mean) * inv;
      if (track) normed[static_cast<size_t>(i) * c + j] = nj;
      orow[j] = nj * gain.data()[j] + bias.data()[j];
    }
  }
  if (track) {
    Tape::current()->record([xn = x.shared_node(), gn = gain.shared_node(),
                             bn = bias.shared_node(), on = out.shared_node(),
                             inv_std = std::move(inv_std),
                             normed = std::move(normed), r, c] {
      if (gn->requires_grad) gn->ensure_grad();
      if (bn->requires_grad) bn->ensure_grad();
      if (xn->requires_grad) xn->ensure_grad();
      for (int i = 0; i < r; ++i) {
        const Real* dy = on->grad.data() + static_cast<size_t>(i) * c;
        const Real* nh = normed.data() + static_cast<size_t>(i) * c;
        if (gn->requires_grad || bn->requires_grad) {
          for (int j = 0; j < c; ++j) {
            if (gn->requires_grad) gn->grad[j] += dy[j] * nh[j];
            if (bn->requires_grad) bn->grad[j] += dy[j];
          }
        }
        if (xn->requires_grad) {
          Real sum_dxh = 0, sum_dxh_nh = 0;
          for (int j = 0; j < c; ++j) {
            Real dxh = dy[j] * gn->value[j];
            sum_dxh += dxh;
            sum_dxh_nh += dxh * nh[j];
          }
          Real inv = inv_std[static_cast<size_t>(i)];
          Real* dx = xn->grad.data() + static_cast<size_t>(i) * c;
          for (int j = 0; j < c; ++j) {
            Real dxh = dy[j] * gn->value[j];
            dx[j] += inv * (dxh - sum_dxh / c - nh[j] * sum_dxh_nh / c);
          }
        }
      }
    });
  }
  return out;
}

Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids,
                      Real s) {
  if (table.shape().size() != 2) tensor_error("embedding_rows: table must be 2-D");
  const int vocab = table.rows(), d = table.cols();
  for (int id : ids)
    if (id < 0 || id >= vocab)
      tensor_error("embedding_rows: token index out of range");
  bool track = grad_enabled({&table});
  Tensor out = make_output({static_cast<int>(ids.size()), d}, track);
  for (size_t i = 0; i < ids.size(); ++i)
    for (int j = 0; j < d; ++j)
      out.data()[i * d + j] =
          table.data()[static_cast<size_t>(ids[i]) * d + j] * s;
  if (track) {
    Tape::current()->record(
        [tn = table.shared_node(), on = out.shared_node(), ids, s, d] {
          if (!tn->requires_grad) return;
          tn->ensure_grad();
          for (size_t i = 0; i < ids.size(); ++i)
            for (int j = 0; j < d; ++j)
              tn->grad[static_cast<size_t>(ids[i]) * d + j] +=
                  on->grad[i * d + j] * s;
        });
  }
  return out;
}

Tensor gather_rows(const Tensor& m, const std::vector<int>& rows) {
  if (m.shape().size() != 2) tensor_error("gather_rows: expected matrix");
  const int r = m.rows(), c = m.cols();
  for (int idx : rows)
    if (idx < 0 || idx >= r) tensor_error("gather_rows: row index out of range");
  bool track = grad_enabled({&m});
  Tensor out = make_output({static_cast<int>(rows.size()), c}, track);
  for (size_t i = 0; i < rows.size(); ++i)
    for (int j = 0; j < c; ++j)
      out.data()[i * c + j] = m.data()[static_cast<size_t>(rows[i]) * c + j];
  if (track) {
    Tape::current()->record(
        [mn = m.shared_node(), on = out.shared_node(), rows, c] {
          if (!mn->requires_grad) return;
          mn->ensure_grad();
          for (size_t i = 0; i < rows.size(); ++i)
            for (int j = 0; j < c; ++j)
              mn->grad[static_cast<size_t>(rows[i]) * c + j] +=
                  on->grad[i * c + j];
        });
  }
  return out;
}

Tensor dropout(const Tensor& a, Real rate, Rng& rng) {
  if (rate < Real{0} || rate >= Real{1}) tensor_error("dropout: rate in [0,1)");
  if (rate == Real{0}) return a;
  bool track = grad_enabled({&a});
  Tensor out = make_output(a.shape(), track);
  std::vector<Real> mask(a.data().size());
  Real keep = Real{1} - rate;
  for (size_t i = 0; i < mask.size(); ++i)
    mask[i] = rng.uniform() < rate ? Real{0} : Real{1} / keep;
  for (int64_t i = 0; i < a.size(); ++i)
    out.data()[i] = a.data()[i] * mask[i];
  if (track) {
    Tape::current()->record([an = a.shared_node(), on = out.shared_node(),
                             mask = std::move(mask)] {
      if (!an->requires_grad) return;
      an->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i)
        an->grad[i] += on->grad[i] * mask[i];
    });
  }
  return out;
}

Tensor multihead_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                           int heads, bool causal,
                           const std::vector<int>& q_offsets,
                           const std::vector<int>& kv_offsets) {
  if (q.shape().size() != 2 || k.shape().size() != 2 || v.shape().size() != 2)
    tensor_error("multihead_attention: q/k/v must be matrices");
  const int d = q.cols();
  if (k.cols() != d || v.cols() != d)
    tensor_error("multihead_attention: width mismatch");
  if (heads < 1 || d % heads != 0)
    tensor_error("multihead_attention: width not divisible by heads");
  if (q_offsets.size() != kv_offsets.size() || q_offsets.size() < 2 ||
      q_offsets.front() != 0 || kv_offsets.front() != 0 ||
      q_offsets.back() != q.rows() || kv_offsets.back() != k.rows() ||
      k.rows() != v.rows())
    tensor_error("multihead_attention: bad segment offsets");
  if (causal && q_offsets != kv_offsets)
    tensor_error("multihead_attention: causal attention needs equal segments");

  const int dh = d / heads;
  const Real inv_sqrt = Real{1} / std::sqrt(static_cast<Real>(dh));
  const size_t batches = q_offsets.size() - 1;
  bool track = grad_enabled({&q, &k, &v});
  Tensor out = make_output(q.shape(), track);

  // Per (segment, head) softmax probabilities, kept for the backward step.
  std::vector<EMat> probs;
  if (track) probs.reserve(batches * static_cast<size_t>(heads));

  ECMap qm = cmap2d(q), km = cmap2d(k), vm = cmap2d(v);
  EMap om = map2d(out);
  for (size_t b = 0; b < batches; ++b) {
    const int q0 = q_offsets[b], tq = q_offsets[b + 1] - q0;
    const int k0 = kv_offsets[b], tk = kv_offsets[b + 1] - k0;
    for (int h = 0; h < heads; ++h) {
      auto qb = qm.block(q0, h * dh, tq, dh);
      auto kb = km.block(k0, h * dh, tk, dh);
      auto vb = vm.block(k0, h * dh, tk, dh);
      EMat scores = (qb * kb.transpose()) * inv_sqrt;
      if (causal) {
        for (int i = 0; i < tq; ++i)
          for (int j = i + 1; j < tk; ++j)
            scores(i, j) = -std::numeric_limits<Real>::infinity();
      }
      // Row softmax.
      for (int i = 0; i < tq; ++i) {
        Real mx = scores.row(i).maxCoeff();
        scores.row(i) = (scores.row(i).array() - mx).exp();
        Real sum = scores.row(i).sum();
        scores.row(i) /= sum;
      }
      om.block(q0, h * dh, tq, dh).noalias() = scores * vb;
      if (track) probs.push_back(std::move(scores));
    }
  }

  if (track) {
    Tape::current()->record([qn = q.shared_node(), kn = k.shared_node(),
                             vn = v.shared_node(), on = out.shared_node(),
                             probs = std::move(probs), q_offsets, kv_offsets,
                             heads, dh, inv_sqrt] {
      const int d = heads * dh;
      ECMap og(on->grad.data(), on->shape[0], on->shape[1]);
      ECMap qm(qn->value.data(), qn->shape[0], d);
      ECMap km(kn->value.data(), kn->shape[0], d);
      ECMap vm(vn->value.data(), vn->shape[0], d);
      if (qn->requires_grad) qn->ensure_grad();
      if (kn->requires_grad) kn->ensure_grad();
      if (vn->requires_grad) vn->ensure_grad();
      const size_t batches = q_offsets.size() - 1;
      for (size_t b = 0; b < batches; ++b) {
        const int q0 = q_offsets[b], tq = q_offsets[b + 1] - q0;
        const int k0 = kv_offsets[b], tk = kv_offsets[b + 1] - k0;
        for (int h = 0; h < heads; ++h) {
          const EMat& p = probs[b * static_cast<size_t>(heads) +
                                static_cast<size_t>(h)];
          auto dout = og.block(q0, h * dh, tq, dh);
          auto kb = km.block(k0, h * dh, tk, dh);
          auto qb = qm.block(q0, h * dh, tq, dh);
          auto vb = vm.block(k0, h * dh, tk, dh);
          if (vn->requires_grad) {
            EMap vg(vn->grad.data(), vn->shape[0], d);
            vg.block(k0, h * dh, tk, dh).noalias() += p.transpose() * dout;
          }
          if (qn->requires_grad || kn->requires_grad) {
            EMat dp = dout * vb.transpose();  // [tq, tk]
            EMat ds(tq, tk);
            for (int i = 0; i < tq; ++i) {
              Real dot = dp.row(i).cwiseProduct(p.row(i)).sum();
              ds.row(i) =
                  p.row(i).cwiseProduct(dp.row(i).array().operator-(dot).matrix());
            }
            ds *= inv_sqrt;
            if (qn->requires_grad) {
              EMap qg(qn->grad.data(), qn->shape[0], d);
              qg.block(q0, h * dh, tq, dh).noalias() += ds * kb;
            }
            if (kn->requires_grad) {
              EMap kg(kn->grad.data(), kn->shape[0], d);
              kg.block(k0, h * dh, tk, dh).noalias() += ds.transpose() * qb;
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     Real label_smoothing, int pad_id) {
  if (logits.shape().size() != 2) tensor_error("cross_entropy: logits must be 2-D");
  const int r = logits.rows(), v = logits.cols();
  if (static_cast<int>(targets.size()) != r)
    tensor_error("cross_entropy: one target per logits row required");
  if (label_smoothing < Real{0} || label_smoothing >= Real{1})
    tensor_error("cross_entropy: label_smoothing in [0,1)");
  int n_active = 0;
  for (int t : targets) {
    if (t == pad_id) continue;
    if (t < 0 || t >= v) tensor_error("cross_entropy: target index out of range");
    ++n_active;
  }
  if (n_active == 0) tensor_error("cross_entropy: all positions are padding");

  bool track = grad_enabled({&logits});
  Tensor out = make_output({1}, track);
  std::vector<Real> log_z(static_cast<size_t>(r));
  Real total = 0;
  const Real eps = label_smoothing;
  for (int i = 0; i < r; ++i) {
    if (targets[static_cast<size_t>(i)] == pad_id) continue;
    const Real* row = logits.data().data() + static_cast<size_t>(i) * v;
    Real mx = row[0];
    for (int j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    Real sum = 0, row_sum = 0;
    for (int j = 0; j < v; ++j) {
      sum += std::exp(row[j] - mx);
      row_sum += row[j];
    }
    Real z = mx + std::log(sum);
    log_z[static_cast<size_t>(i)] = z;
    total += z - (Real{1} - eps) * row[targets[static_cast<size_t>(i)]] -
             eps / v * row_sum;
  }
  out.data()[0] = total / n_active;

  if (track) {
    Tape::current()->record([ln = logits.shared_node(), on = out.shared_node(),
                             targets, log_z = std::move(log_z), eps, pad_id,
                             n_active, r, v] {
      if (!ln->requires_grad) return;
      ln->ensure_grad();
      Real g = on->grad[0] / n_active;
      for (int i = 0; i < r; ++i) {
        int t = targets[static_cast<size_t>(i)];
        if (t == pad_id) continue;
        const Real* row = ln->value.data() + static_cast<size_t>(i) * v;
        Real* drow = ln->grad.data() + static_cast<size_t>(i) * v;
        Real z = log_z[static_cast<size_t>(i)];
        for (int j = 0; j < v; ++j) {
          Real p = std::exp(row[j] - z);
          Real q = eps / v + (j == t ? Real{1} - eps : Real{0});
          drow[j] += g * (p - q);
        }
      }
    });
  }
  return out;
}

namespace {
constexpr Real kProbClamp = Real(1e-12);
Real clamp_prob(Real p) {
  if (p < kProbClamp) return kProbClamp;
  if (p > Real{1} - kProbClamp) return Real{1} - kProbClamp;
  return p;
}
}  // namespace

Tensor weighted_bce(const Tensor& probs, const std::vector<Real>& targets,
                    const std::vector<Real>& class_weights,
                    const std::vector<Real>& sample_weights) {
  if (probs.shape().size() != 2) tensor_error("weighted_bce: probs must be [B,K]");
  const int batch = probs.rows(), k = probs.cols();
  if (static_cast<int>(targets.size()) != batch * k)
    tensor_error("weighted_bce: targets must be B*K");
  if (static_cast<int>(class_weights.size()) != k)
    tensor_error("weighted_bce: class_weights must be K");
  if (static_cast<int>(sample_weights.size()) != batch)
    tensor_error("weighted_bce: sample_weights must be B");

  bool track = grad_enabled({&probs});
  Tensor out = make_output({1}, track);
  Real total = 0;
  for (int b = 0; b < batch; ++b) {
    for (int j = 0; j < k; ++j) {
      Real p = clamp_prob(probs.data()[static_cast<size_t>(b) * k + j]);
      Real y = targets[static_cast<size_t>(b) * k + j];
      total -= sample_weights[static_cast<size_t>(b)] *
               (class_weights[static_cast<size_t>(j)] * y * std::log(p) +
                (Real{1} - y) * std::log(Real{1} - p));
    }
  }
  out.data()[0] = total / (static_cast<Real>(batch) * k);

  if (track) {
    Tape::current()->record([pn = probs.shared_node(), on = out.shared_node(),
                             targets, class_weights, sample_weights, batch, k] {
      if (!pn->requires_grad) return;
      pn->ensure_grad();
      Real g = on->grad[0] / (static_cast<Real>(batch) * k);
      for (int b = 0; b < batch; ++b) {
        for (int j = 0; j < k; ++j) {
          size_t idx = static_cast<size_t>(b) * k + j;
          Real p = clamp_prob(pn->value[idx]);
          Real y = targets[idx];
          pn->grad[idx] -=
              g * sample_weights[static_cast<size_t>(b)] *
              (class_weights[static_cast<size_t>(j)] * y / p -
               (Real{1} - y) / (Real{1} - p));
        }
      }
    });
  }
  return out;
}

Tensor f_beta_loss(const Tensor& probs, const std::vector<Real>& targets,
                   Real beta) {
  if (probs.shape().size() != 2) tensor_error("f_beta_loss: probs must be [B,K]");
  if (beta <= Real{0}) tensor_error("f_beta_loss: beta must be positive");
  const int batch = probs.rows(), k = probs.cols();
  if (static_cast<int>(targets.size()) != batch * k)
    tensor_error("f_beta_loss: targets must be B*K");

  bool track = grad_enabled({&probs});
  Tensor out = make_output({1}, track);
  const Real b2 = beta * beta;
  Real total = 0;
  for (int b = 0; b < batch; ++b) {
    Real mu = 0, sum_p = 0, sum_y = 0;
    for (int j = 0; j < k; ++j) {
      size_t idx = static_cast<size_t>(b) * k + j;
      mu += probs.data()[idx] * targets[idx];
      sum_p += probs.data()[idx];
      sum_y += targets[idx];
    }
    // F = (1+b^2) mu / (sum_p + b^2 sum_y); degenerate rows score loss 1.
    Real denom = sum_p + b2 * sum_y;
    Real f = (mu > Real{0} && denom > Real{0})
                 ? (Real{1} + b2) * mu / denom
                 : Real{0};
    total += Real{1} - f;
  }
  out.data()[0] = total / batch;

  if (track) {
    Tape::current()->record([pn = probs.shared_node(), on = out.shared_node(),
                             targets, b2, batch, k] {
      if (!pn->requires_grad) return;
      pn->ensure_grad();
      Real g = on->grad[0] / batch;
      for (int b = 0; b < batch; ++b) {
        Real mu = 0, sum_p = 0, sum_y = 0;
        for (int j = 0; j < k; ++j) {
          size_t idx = static_cast<size_t>(b) * k + j;
          mu += pn->value[idx] * targets[idx];
          sum_p += pn->value[idx];
          sum_y += targets[idx];
        }
        Real denom = sum_p + b2 * sum_y;
        if (mu <= Real{0} || denom <= Real{0}) continue;
        for (int j = 0; j < k; ++j) {
          size_t idx = static_cast<size_t>(b) * k + j;
          // dF/dp = (1+b^2) (y * denom - mu) / denom^2
          Real df = (Real{1} + b2) * (targets[idx] * denom - mu) / (denom * denom);
          pn->grad[idx] -= g * df;
        }
      }
    });
  }
  return out;
}

}  // namespace tiedmt
