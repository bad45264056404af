#include "spikedec/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "spikedec/kernels.hpp"

namespace spikedec {

Graph::Node* Graph::make(Tensor value, std::vector<Node*> inputs) {
    nodes_.emplace_back();
    Node& n = nodes_.back();
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    for (Node* in : n.inputs)
        if (in && in->requires_grad) n.requires_grad = true;
    has_recorded_ = true;
    return &n;
}

Graph::Node* Graph::input(Tensor v, bool track_grad) {
    Node* n = make(std::move(v), {});
    n->requires_grad = track_grad;
    return n;
}

Graph::Node* Graph::param(Parameter& p) {
    Node* n = make(p.value, {});
    n->requires_grad = true;
    n->bound_param = &p;
    return n;
}

Graph::Node* Graph::conv1d(Node* x, Node* w, Node* bias) {
    if (x->value.rank() != 3 || w->value.rank() != 3)
        throw DimensionError("conv1d: expected x [B,C_in,T] and w [C_out,C_in,k]");
    const std::size_t B = x->value.dim(0), C_in = x->value.dim(1), T = x->value.dim(2);
    const std::size_t C_out = w->value.dim(0), k = w->value.dim(2);
    if (w->value.dim(1) != C_in) throw DimensionError("conv1d: channel mismatch");
    if (bias && bias->value.size() != C_out) throw DimensionError("conv1d: bias size mismatch");

    Tensor out({B, C_out, T});
    kernels::conv1d_forward(B, C_in, T, C_out, k, x->value.data.data(), w->value.data.data(),
                            bias ? bias->value.data.data() : nullptr, out.data.data());
    Node* n = make(std::move(out), bias ? std::vector<Node*>{x, w, bias}
                                        : std::vector<Node*>{x, w});
    n->backward_fn = [x, w, bias, B, C_in, T, C_out, k](Node& self) {
        if (x->requires_grad)
            kernels::conv1d_backward_input(B, C_in, T, C_out, k, w->value.data.data(),
                                           self.grad.data.data(), x->grad.data.data());
        if (w->requires_grad)
            kernels::conv1d_backward_weight(B, C_in, T, C_out, k, x->value.data.data(),
                                            self.grad.data.data(), w->grad.data.data(),
                                            bias && bias->requires_grad ? bias->grad.data.data()
                                                                        : nullptr);
    };
    return n;
}

Graph::Node* Graph::conv2d_spatial(Node* x, Node* kv) {
    if (x->value.rank() != 3 || kv->value.rank() != 1)
        throw DimensionError("conv2d_spatial: expected x [B,C,T] and kernel [k]");
    const std::size_t B = x->value.dim(0), C = x->value.dim(1), T = x->value.dim(2);
    const std::size_t k = kv->value.dim(0);

    Tensor out({B, C, T});
    kernels::conv2d_spatial_forward(B, C, T, k, x->value.data.data(), kv->value.data.data(),
                                    out.data.data());
    Node* n = make(std::move(out), {x, kv});
    n->backward_fn = [x, kv, B, C, T, k](Node& self) {
        if (x->requires_grad)
            kernels::conv2d_spatial_backward_input(B, C, T, k, kv->value.data.data(),
                                                   self.grad.data.data(), x->grad.data.data());
        if (kv->requires_grad)
            kernels::conv2d_spatial_backward_weight(B, C, T, k, x->value.data.data(),
                                                    self.grad.data.data(),
                                                    kv->grad.data.data());
    };
    return n;
}

Graph::Node* Graph::batchnorm(Node* x, Node* gamma, Node* xi, BatchNormStats& stats, Mode mode) {
    if (x->value.rank() != 3) throw DimensionError("batchnorm: expected x [B,C,T]");
    const std::size_t B = x->value.dim(0), C = x->value.dim(1), T = x->value.dim(2);
    if (gamma->value.size() != C || xi->value.size() != C)
        throw DimensionError("batchnorm: affine parameter size mismatch");
    const std::size_t N = B * T;

    auto xhat = std::make_shared<Tensor>(Tensor({B, C, T}));
    auto inv_std = std::make_shared<std::vector<double>>(C);

    if (mode == Mode::Train) {
        std::vector<double> mean(C), var(C);
        for (std::size_t c = 0; c < C; ++c) {
            double m = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                const double* xs = x->value.data.data() + (b * C + c) * T;
                for (std::size_t t = 0; t < T; ++t) m += xs[t];
            }
            m /= static_cast<double>(N);
            double v = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                const double* xs = x->value.data.data() + (b * C + c) * T;
                for (std::size_t t = 0; t < T; ++t) v += (xs[t] - m) * (xs[t] - m);
            }
            v /= static_cast<double>(N);
            mean[c] = m;
            var[c] = v;
            (*inv_std)[c] = 1.0 / std::sqrt(v + stats.eps);
            // Running variance uses the unbiased estimate.
            const double var_unbiased = N > 1 ? v * static_cast<double>(N) / static_cast<double>(N - 1) : v;
            stats.running_mean[c] = (1.0 - stats.momentum) * stats.running_mean[c] + stats.momentum * m;
            stats.running_var[c] = (1.0 - stats.momentum) * stats.running_var[c] + stats.momentum * var_unbiased;
        }
        stats.ever_updated = true;
#pragma omp parallel for collapse(2) schedule(static)
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t c = 0; c < C; ++c) {
                const double* xs = x->value.data.data() + (b * C + c) * T;
                double* xh = xhat->data.data() + (b * C + c) * T;
                for (std::size_t t = 0; t < T; ++t) xh[t] = (xs[t] - mean[c]) * (*inv_std)[c];
            }
    } else {
        if (!stats.ever_updated) ++stats.eval_with_initial_stats;
        for (std::size_t c = 0; c < C; ++c)
            (*inv_std)[c] = 1.0 / std::sqrt(stats.running_var[c] + stats.eps);
#pragma omp parallel for collapse(2) schedule(static)
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t c = 0; c < C; ++c) {
                const double* xs = x->value.data.data() + (b * C + c) * T;
                double* xh = xhat->data.data() + (b * C + c) * T;
                for (std::size_t t = 0; t < T; ++t)
                    xh[t] = (xs[t] - stats.running_mean[c]) * (*inv_std)[c];
            }
    }

    Tensor out({B, C, T});
#pragma omp parallel for collapse(2) schedule(static)
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) {
            const double g = gamma->value[c], s = xi->value[c];
            const double* xh = xhat->data.data() + (b * C + c) * T;
            double* o = out.data.data() + (b * C + c) * T;
            for (std::size_t t = 0; t < T; ++t) o[t] = g * xh[t] + s;
        }

    Node* n = make(std::move(out), {x, gamma, xi});
    const bool train = mode == Mode::Train;
    n->backward_fn = [x, gamma, xi, xhat, inv_std, B, C, T, N, train](Node& self) {
        for (std::size_t c = 0; c < C; ++c) {
            double sum_g = 0.0, sum_gx = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                const double* go = self.grad.data.data() + (b * C + c) * T;
                const double* xh = xhat->data.data() + (b * C + c) * T;
                for (std::size_t t = 0; t < T; ++t) {
                    sum_g += go[t];
                    sum_gx += go[t] * xh[t];
                }
            }
            if (gamma->requires_grad) gamma->grad[c] += sum_gx;
            if (xi->requires_grad) xi->grad[c] += sum_g;
            if (x->requires_grad) {
                const double gc = gamma->value[c] * (*inv_std)[c];
                const double mg = sum_g / static_cast<double>(N);
                const double mgx = sum_gx / static_cast<double>(N);
                for (std::size_t b = 0; b < B; ++b) {
                    const double* go = self.grad.data.data() + (b * C + c) * T;
                    const double* xh = xhat->data.data() + (b * C + c) * T;
                    double* gx = x->grad.data.data() + (b * C + c) * T;
                    for (std::size_t t = 0; t < T; ++t)
                        gx[t] += train ? gc * (go[t] - mg - xh[t] * mgx) : gc * go[t];
                }
            }
        }
    };
    return n;
}

namespace {

struct NeuronSaved {
    Tensor h;      // candidate potential per element
    Tensor spikes; // forward output (hard 0/1 or soft)
    Tensor u_pre;  // membrane before the step
    Tensor aux_pre;
};

}  // namespace

Graph::Node* Graph::neuron_layer(Node* x, const NeuronLayerCfg& cfg, Node* plif_w) {
    if (x->value.rank() != 3) throw DimensionError("neuron_layer: expected x [B,C,T]");
    if ((cfg.kind == NeuronKind::PLIF) != (plif_w != nullptr))
        throw ConfigError("neuron_layer: plif_w required exactly for PLIF");
    const std::size_t B = x->value.dim(0), C = x->value.dim(1), T = x->value.dim(2);

    auto sv = std::make_shared<NeuronSaved>();
    sv->h = Tensor({B, C, T});
    sv->spikes = Tensor({B, C, T});
    sv->u_pre = Tensor({B, C, T});
    const bool is_izh = cfg.kind == NeuronKind::Izhikevich;
    if (is_izh) sv->aux_pre = Tensor({B, C, T});

    // PLIF leak per channel: a single shared scalar or one per unit.
    auto betas = std::make_shared<std::vector<double>>(C, cfg.lif_beta);
    if (cfg.kind == NeuronKind::PLIF) {
        if (plif_w->value.size() != 1 && plif_w->value.size() != C)
            throw DimensionError("neuron_layer: plif_w must be scalar or one per channel");
        for (std::size_t c = 0; c < C; ++c)
            (*betas)[c] = sigmoid(plif_w->value[plif_w->value.size() == 1 ? 0 : c]);
    }
    const double v_th = is_izh ? cfg.izh.v_th : cfg.v_th;
    const double u_reset = is_izh ? cfg.izh.c : cfg.u_reset;

    std::int64_t bad_step = -1;  // first non-finite step seen, reported after the region
#pragma omp parallel for collapse(2) schedule(static)
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) {
            const std::size_t base = (b * C + c) * T;
            const double* xs = x->value.data.data() + base;
            double* hs = sv->h.data.data() + base;
            double* ss = sv->spikes.data.data() + base;
            double* us = sv->u_pre.data.data() + base;
            double u = is_izh ? cfg.izh.c : cfg.u_reset;  // state resets per sequence
            double aux = is_izh ? cfg.izh.b * cfg.izh.c : 0.0;
            const double beta = (*betas)[c];
            for (std::size_t t = 0; t < T; ++t) {
                us[t] = u;
                if (is_izh) sv->aux_pre.data[base + t] = aux;
                double h;
                switch (cfg.kind) {
                    case NeuronKind::PLIF:
                    case NeuronKind::LIF:
                        h = beta * u + (1.0 - beta) * xs[t];
                        break;
                    case NeuronKind::QIF:
                        h = u + (u - cfg.qif.u_rest) * (u - cfg.qif.u_c) / cfg.qif.tau_q + xs[t];
                        break;
                    case NeuronKind::EIF: {
                        double e = (u - cfg.eif.theta_t) / cfg.eif.delta_t;
                        if (e > kEifExpClamp) {
                            e = kEifExpClamp;
                            ++eif_clamp_count;
                        }
                        h = u + (-(u - cfg.eif.u_rest) + cfg.eif.delta_t * std::exp(e) + xs[t]) /
                                    cfg.eif.tau_e;
                        break;
                    }
                    case NeuronKind::Izhikevich:
                        h = u + 0.04 * u * u + 5.0 * u + 140.0 - aux + xs[t];
                        break;
                }
                if (!std::isfinite(h)) {
#pragma omp critical
                    {
                        if (bad_step < 0 || static_cast<std::int64_t>(t) < bad_step)
                            bad_step = static_cast<std::int64_t>(t);
                    }
                    h = 0.0;
                }
                hs[t] = h;
                const double s = cfg.soft_forward ? surrogate_primitive(cfg.surrogate, h, v_th)
                                                  : (h >= v_th ? 1.0 : 0.0);
                ss[t] = s;
                if (is_izh) {
                    const double aux_next = aux + cfg.izh.a * (cfg.izh.b * u - aux);
                    aux = cfg.soft_forward ? aux_next + s * cfg.izh.d
                                           : (s != 0.0 ? aux_next + cfg.izh.d : aux_next);
                }
                u = (1.0 - s) * h + s * u_reset;
            }
        }

    if (bad_step >= 0)
        throw NumericError("neuron_layer: non-finite potential at step " +
                           std::to_string(bad_step));

    Node* n = make(sv->spikes, plif_w ? std::vector<Node*>{x, plif_w}
                                      : std::vector<Node*>{x});
    NeuronLayerCfg cc = cfg;
    n->backward_fn = [x, plif_w, sv, cc, betas, v_th, u_reset, B, C, T](Node& self) {
        const bool is_izh = cc.kind == NeuronKind::Izhikevich;
        const bool want_beta = cc.kind == NeuronKind::PLIF && plif_w && plif_w->requires_grad;
        std::vector<double> gbeta_rows(want_beta ? B * C : 0, 0.0);
#pragma omp parallel for collapse(2) schedule(static)
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t c = 0; c < C; ++c) {
                const std::size_t base = (b * C + c) * T;
                const double* go = self.grad.data.data() + base;
                const double* hs = sv->h.data.data() + base;
                const double* ss = sv->spikes.data.data() + base;
                const double* us = sv->u_pre.data.data() + base;
                const double* xs = x->value.data.data() + base;
                double* gx = x->requires_grad ? x->grad.data.data() + base : nullptr;
                double du = 0.0;   // dL/du_{t+1}
                double daux = 0.0; // dL/daux_{t+1} (Izhikevich)
                double gbeta = 0.0;
                const double beta = (*betas)[c];
                for (std::size_t t = T; t-- > 0;) {
                    const double sg = surrogate_grad(cc.surrogate, hs[t], v_th);
                    const double s = ss[t];
                    // dL/dh through the spike output, the reset gate, and (for
                    // Izhikevich) the spike-triggered recovery jump.
                    double gh = go[t] * sg + du * ((1.0 - s) + (u_reset - hs[t]) * sg);
                    if (is_izh) gh += daux * cc.izh.d * sg;
                    double dh_du = 0.0, dh_dx = 0.0;
                    switch (cc.kind) {
                        case NeuronKind::PLIF:
                        case NeuronKind::LIF:
                            dh_du = beta;
                            dh_dx = 1.0 - beta;
                            break;
                        case NeuronKind::QIF:
                            dh_du = 1.0 + (2.0 * us[t] - cc.qif.u_rest - cc.qif.u_c) / cc.qif.tau_q;
                            dh_dx = 1.0;
                            break;
                        case NeuronKind::EIF: {
                            const double e = (us[t] - cc.eif.theta_t) / cc.eif.delta_t;
                            const double de = e > kEifExpClamp ? 0.0 : std::exp(e);
                            dh_du = 1.0 + (-1.0 + de) / cc.eif.tau_e;
                            dh_dx = 1.0 / cc.eif.tau_e;
                            break;
                        }
                        case NeuronKind::Izhikevich:
                            dh_du = 1.0 + 0.08 * us[t] + 5.0;
                            dh_dx = 1.0;
                            break;
                    }
                    if (gx) gx[t] += gh * dh_dx;
                    if (want_beta) gbeta += gh * (us[t] - xs[t]);
                    if (is_izh) {
                        const double daux_new = gh * -1.0 + daux * (1.0 - cc.izh.a);
                        du = gh * dh_du + daux * (cc.izh.a * cc.izh.b);
                        daux = daux_new;
                    } else {
                        du = gh * dh_du;
                    }
                }
                if (want_beta) gbeta_rows[b * C + c] = gbeta;
            }
        if (want_beta) {
            if (plif_w->value.size() == 1) {
                double gbeta = 0.0;
                for (double v : gbeta_rows) gbeta += v;  // fixed order
                const double beta = (*betas)[0];
                plif_w->grad[0] += gbeta * beta * (1.0 - beta);
            } else {
                for (std::size_t c = 0; c < C; ++c) {
                    double gbeta = 0.0;
                    for (std::size_t b = 0; b < B; ++b) gbeta += gbeta_rows[b * C + c];
                    const double beta = (*betas)[c];
                    plif_w->grad[c] += gbeta * beta * (1.0 - beta);
                }
            }
        }
    };
    return n;
}

Graph::Node* Graph::avg_pool_time(Node* x) {
    if (x->value.rank() != 3) throw DimensionError("avg_pool_time: expected x [B,C,T]");
    const std::size_t B = x->value.dim(0), C = x->value.dim(1), T = x->value.dim(2);
    Tensor out({B, C});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) {
            const double* xs = x->value.data.data() + (b * C + c) * T;
            double acc = 0.0;
            for (std::size_t t = 0; t < T; ++t) acc += xs[t];
            out.at2(b, c) = acc / static_cast<double>(T);
        }
    Node* n = make(std::move(out), {x});
    n->backward_fn = [x, B, C, T](Node& self) {
        if (!x->requires_grad) return;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t c = 0; c < C; ++c) {
                const double g = self.grad.at2(b, c) / static_cast<double>(T);
                double* gx = x->grad.data.data() + (b * C + c) * T;
                for (std::size_t t = 0; t < T; ++t) gx[t] += g;
            }
    };
    return n;
}

Graph::Node* Graph::linear(Node* x, Node* w, Node* bias) {
    if (x->value.rank() != 2 || w->value.rank() != 2)
        throw DimensionError("linear: expected x [B,d_in] and w [d_out,d_in]");
    const std::size_t B = x->value.dim(0), d_in = x->value.dim(1), d_out = w->value.dim(0);
    if (w->value.dim(1) != d_in) throw DimensionError("linear: input width mismatch");
    if (bias && bias->value.size() != d_out) throw DimensionError("linear: bias size mismatch");

    Tensor out({B, d_out});
    kernels::linear_forward(B, d_in, d_out, x->value.data.data(), w->value.data.data(),
                            bias ? bias->value.data.data() : nullptr, out.data.data());
    Node* n = make(std::move(out), bias ? std::vector<Node*>{x, w, bias}
                                        : std::vector<Node*>{x, w});
    n->backward_fn = [x, w, bias, B, d_in, d_out](Node& self) {
        kernels::linear_backward(B, d_in, d_out, x->value.data.data(), w->value.data.data(),
                                 self.grad.data.data(),
                                 x->requires_grad ? x->grad.data.data() : nullptr,
                                 w->requires_grad ? w->grad.data.data() : nullptr,
                                 bias && bias->requires_grad ? bias->grad.data.data() : nullptr);
    };
    return n;
}

Graph::Node* Graph::concat_cols(Node* a, Node* b) {
    if (a->value.rank() != 2 || b->value.rank() != 2 || a->value.dim(0) != b->value.dim(0))
        throw DimensionError("concat_cols: expected [B,d1] and [B,d2]");
    const std::size_t B = a->value.dim(0), d1 = a->value.dim(1), d2 = b->value.dim(1);
    Tensor out({B, d1 + d2});
    for (std::size_t i = 0; i < B; ++i) {
        std::copy_n(a->value.data.data() + i * d1, d1, out.data.data() + i * (d1 + d2));
        std::copy_n(b->value.data.data() + i * d2, d2, out.data.data() + i * (d1 + d2) + d1);
    }
    Node* n = make(std::move(out), {a, b});
    n->backward_fn = [a, b, B, d1, d2](Node& self) {
        for (std::size_t i = 0; i < B; ++i) {
            const double* g = self.grad.data.data() + i * (d1 + d2);
            if (a->requires_grad)
                for (std::size_t j = 0; j < d1; ++j) a->grad.data[i * d1 + j] += g[j];
            if (b->requires_grad)
                for (std::size_t j = 0; j < d2; ++j) b->grad.data[i * d2 + j] += g[d1 + j];
        }
    };
    return n;
}

Graph::Node* Graph::affine_const(Node* x, std::vector<double> scale, std::vector<double> shift) {
    if (x->value.rank() != 2) throw DimensionError("affine_const: expected x [B,D]");
    const std::size_t B = x->value.dim(0), D = x->value.dim(1);
    if (scale.size() != D || shift.size() != D)
        throw DimensionError("affine_const: scale/shift size mismatch");
    Tensor out({B, D});
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < D; ++j)
            out.at2(i, j) = (x->value.at2(i, j) - shift[j]) * scale[j];
    Node* n = make(std::move(out), {x});
    auto sc = std::make_shared<std::vector<double>>(std::move(scale));
    n->backward_fn = [x, sc, B, D](Node& self) {
        if (!x->requires_grad) return;
        for (std::size_t i = 0; i < B; ++i)
            for (std::size_t j = 0; j < D; ++j)
                x->grad.at2(i, j) += self.grad.at2(i, j) * (*sc)[j];
    };
    return n;
}

Graph::Node* Graph::group_avg_channels(Node* x, std::size_t c_out) {
    if (x->value.rank() != 3) throw DimensionError("group_avg_channels: expected x [B,C,T]");
    const std::size_t B = x->value.dim(0), C = x->value.dim(1), T = x->value.dim(2);
    // Contiguous source range per output channel; at least one source channel
    // each, so the map degenerates to replication when c_out > C.
    auto lo = std::make_shared<std::vector<std::size_t>>(c_out);
    auto hi = std::make_shared<std::vector<std::size_t>>(c_out);
    for (std::size_t g = 0; g < c_out; ++g) {
        (*lo)[g] = g * C / c_out;
        (*hi)[g] = std::max((*lo)[g] + 1, (g + 1) * C / c_out);
    }
    Tensor out({B, c_out, T});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t g = 0; g < c_out; ++g) {
            double* o = out.data.data() + (b * c_out + g) * T;
            const double inv = 1.0 / static_cast<double>((*hi)[g] - (*lo)[g]);
            for (std::size_t c = (*lo)[g]; c < (*hi)[g]; ++c) {
                const double* xs = x->value.data.data() + (b * C + c) * T;
                for (std::size_t t = 0; t < T; ++t) o[t] += xs[t] * inv;
            }
        }
    Node* n = make(std::move(out), {x});
    n->backward_fn = [x, lo, hi, B, C, T, c_out](Node& self) {
        if (!x->requires_grad) return;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t g = 0; g < c_out; ++g) {
                const double* go = self.grad.data.data() + (b * c_out + g) * T;
                const double inv = 1.0 / static_cast<double>((*hi)[g] - (*lo)[g]);
                for (std::size_t c = (*lo)[g]; c < (*hi)[g]; ++c) {
                    double* gx = x->grad.data.data() + (b * C + c) * T;
                    for (std::size_t t = 0; t < T; ++t) gx[t] += go[t] * inv;
                }
            }
    };
    return n;
}

Graph::Node* Graph::softmax_cross_entropy(Node* logits,
                                          const std::vector<std::uint16_t>& labels) {
    if (logits->value.rank() != 2) throw DimensionError("softmax_cross_entropy: expected [B,N]");
    const std::size_t B = logits->value.dim(0), N = logits->value.dim(1);
    if (labels.size() != B) throw DimensionError("softmax_cross_entropy: label count mismatch");

    auto probs = std::make_shared<Tensor>(Tensor({B, N}));
    double loss = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        const double* z = logits->value.data.data() + i * N;
        double zmax = z[0];
        for (std::size_t j = 1; j < N; ++j) zmax = std::max(zmax, z[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < N; ++j) denom += std::exp(z[j] - zmax);
        for (std::size_t j = 0; j < N; ++j) probs->at2(i, j) = std::exp(z[j] - zmax) / denom;
        loss -= std::log(std::max(probs->at2(i, labels[i]), 1e-300));
    }
    Tensor out({1});
    out[0] = loss / static_cast<double>(B);

    Node* n = make(std::move(out), {logits});
    auto lab = std::make_shared<std::vector<std::uint16_t>>(labels);
    n->backward_fn = [logits, probs, lab, B, N](Node& self) {
        if (!logits->requires_grad) return;
        const double g = self.grad[0] / static_cast<double>(B);
        for (std::size_t i = 0; i < B; ++i)
            for (std::size_t j = 0; j < N; ++j)
                logits->grad.at2(i, j) +=
                    g * (probs->at2(i, j) - (j == (*lab)[i] ? 1.0 : 0.0));
    };
    return n;
}

Graph::Node* Graph::weighted_sum(Node* x, Tensor weights) {
    if (!x->value.same_shape(weights)) throw DimensionError("weighted_sum: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) acc += weights[i] * x->value[i];
    Tensor out({1});
    out[0] = acc;
    Node* n = make(std::move(out), {x});
    auto w = std::make_shared<Tensor>(std::move(weights));
    n->backward_fn = [x, w](Node& self) {
        if (!x->requires_grad) return;
        for (std::size_t i = 0; i < w->size(); ++i) x->grad[i] += self.grad[0] * (*w)[i];
    };
    return n;
}

void Graph::backward(Node* loss) {
    if (!has_recorded_ || nodes_.empty()) throw Error("backward: no recorded graph");
    if (loss->value.size() != 1) throw DimensionError("backward: loss must be scalar");

    for (Node& n : nodes_)
        if (n.requires_grad) {
            n.grad = Tensor::zeros_like(n.value);
        }
    if (!loss->requires_grad) return;  // nothing trainable upstream
    loss->grad[0] = 1.0;

    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node& n = *it;
        if (!n.requires_grad) continue;
        if (n.backward_fn) n.backward_fn(n);
        if (n.bound_param)
            for (std::size_t i = 0; i < n.grad.size(); ++i) n.bound_param->grad[i] += n.grad[i];
    }
}

}  // namespace spikedec
