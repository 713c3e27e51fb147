#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "frustra/error.hpp"
#include "frustra/models_tabular.hpp"
#include "frustra/parallel.hpp"
#include "frustra/random.hpp"
#include "frustra/sessionize.hpp"

namespace frustra {

/// Padding token plus symbols 1..6.
inline constexpr int lstm_vocab = 7;

struct LstmConfig {
    std::size_t embed_dim = 16;
    std::size_t hidden_dim = 64;
    double lr = 1e-3;
    std::size_t batch = 256;
    std::size_t max_epochs = 30;
    std::size_t patience = 3;
    std::uint64_t seed = 42;
    double grad_clip = 5.0;
    unsigned threads = 1;
};

/// Rows of symbol ids padded with 0 to a common width.
struct SequenceBatch {
    std::size_t width = 0;
    std::vector<std::uint8_t> symbols;
    std::vector<std::size_t> lengths;
    std::vector<int> labels;

    std::size_t rows() const { return lengths.size(); }
    std::uint8_t at(std::size_t row, std::size_t t) const { return symbols[row * width + t]; }

    static SequenceBatch make(std::span<const SymbolSequence> seqs, std::span<const int> labels = {}) {
        if (!labels.empty() && labels.size() != seqs.size()) throw DomainError("sequence and label counts differ");
        SequenceBatch b;
        for (const auto& s : seqs) b.width = std::max(b.width, s.size());
        b.symbols.assign(seqs.size() * b.width, 0);
        for (std::size_t r = 0; r < seqs.size(); ++r) {
            if (seqs[r].empty()) throw DomainError("empty sequence in batch");
            for (std::size_t t = 0; t < seqs[r].size(); ++t) {
                b.symbols[r * b.width + t] = static_cast<std::uint8_t>(to_int(seqs[r][t]));
            }
            b.lengths.push_back(seqs[r].size());
        }
        b.labels.assign(labels.begin(), labels.end());
        if (b.labels.empty()) b.labels.assign(seqs.size(), 0);
        return b;
    }
};

/// One-layer LSTM over symbol embeddings with a single-logit head on the last
/// valid hidden state. All parameters live in one flat vector.
class LstmModel {
public:
    using Matrix = Eigen::MatrixXd;
    using MapM = Eigen::Map<Matrix>;
    using MapCM = Eigen::Map<const Matrix>;
    using MapV = Eigen::Map<Eigen::VectorXd>;
    using MapCV = Eigen::Map<const Eigen::VectorXd>;

    LstmModel() = default;

    LstmModel(std::size_t embed_dim, std::size_t hidden_dim) : embed_(embed_dim), hidden_(hidden_dim) {
        params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parameter_count()));
    }

    /// Embeddings U(-0.1, 0.1); input weights Glorot-uniform per gate;
    /// recurrent weights orthogonal per gate; forget-gate bias 1.
    static LstmModel initialized(std::size_t embed_dim, std::size_t hidden_dim, std::uint64_t seed) {
        LstmModel m(embed_dim, hidden_dim);
        Rng rng(seed);
        const auto E = static_cast<Eigen::Index>(embed_dim);
        const auto H = static_cast<Eigen::Index>(hidden_dim);
        auto emb = m.embedding();
        for (Eigen::Index i = 0; i < emb.size(); ++i) emb.data()[i] = rng.uniform(-0.1, 0.1);
        const double a = std::sqrt(6.0 / static_cast<double>(E + H));
        auto wx = m.input_weights();
        for (Eigen::Index i = 0; i < wx.size(); ++i) wx.data()[i] = rng.uniform(-a, a);
        auto wh = m.recurrent_weights();
        for (int gate = 0; gate < 4; ++gate) {
            Matrix g(H, H);
            for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
            Eigen::HouseholderQR<Matrix> qr(g);
            Matrix q = qr.householderQ() * Matrix::Identity(H, H);
            wh.block(0, gate * H, H, H) = q;
        }
        auto b = m.gate_bias();
        b.setZero();
        b.segment(H, H).setOnes();
        const double ah = 1.0 / std::sqrt(static_cast<double>(H));
        auto w = m.head_weights();
        for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.uniform(-ah, ah);
        m.head_bias() = 0.0;
        return m;
    }

    std::size_t embed_dim() const { return embed_; }
    std::size_t hidden_dim() const { return hidden_; }

    std::size_t parameter_count() const {
        return lstm_vocab * embed_ + embed_ * 4 * hidden_ + hidden_ * 4 * hidden_ + 4 * hidden_ + hidden_ + 1;
    }

    Eigen::VectorXd& params() { return params_; }
    const Eigen::VectorXd& params() const { return params_; }

    MapM embedding() { return {params_.data() + off_emb(), lstm_vocab, ei(embed_)}; }
    MapCM embedding() const { return {params_.data() + off_emb(), lstm_vocab, ei(embed_)}; }
    MapM input_weights() { return {params_.data() + off_wx(), ei(embed_), ei(4 * hidden_)}; }
    MapCM input_weights() const { return {params_.data() + off_wx(), ei(embed_), ei(4 * hidden_)}; }
    MapM recurrent_weights() { return {params_.data() + off_wh(), ei(hidden_), ei(4 * hidden_)}; }
    MapCM recurrent_weights() const { return {params_.data() + off_wh(), ei(hidden_), ei(4 * hidden_)}; }
    MapV gate_bias() { return {params_.data() + off_b(), ei(4 * hidden_)}; }
    MapCV gate_bias() const { return {params_.data() + off_b(), ei(4 * hidden_)}; }
    MapV head_weights() { return {params_.data() + off_w(), ei(hidden_)}; }
    MapCV head_weights() const { return {params_.data() + off_w(), ei(hidden_)}; }
    double& head_bias() { return params_[ei(off_w() + hidden_)]; }
    double head_bias() const { return params_[ei(off_w() + hidden_)]; }

    std::size_t off_emb() const { return 0; }
    std::size_t off_wx() const { return lstm_vocab * embed_; }
    std::size_t off_wh() const { return off_wx() + embed_ * 4 * hidden_; }
    std::size_t off_b() const { return off_wh() + hidden_ * 4 * hidden_; }
    std::size_t off_w() const { return off_b() + 4 * hidden_; }

private:
    static Eigen::Index ei(std::size_t v) { return static_cast<Eigen::Index>(v); }

    std::size_t embed_ = 0;
    std::size_t hidden_ = 0;
    Eigen::VectorXd params_;
};

namespace detail {

/// Rows processed together; fixed so results do not depend on the batch size
/// seen by the caller or on the thread count.
inline constexpr std::size_t lstm_chunk_rows = 32;

/// Forward (and optionally backward) over a set of rows sorted by length,
/// longest first, so the rows still active at step t are a prefix.
class LstmChunk {
public:
    using Matrix = Eigen::MatrixXd;

    LstmChunk(const LstmModel& model, const SequenceBatch& batch, std::span<const std::size_t> rows)
        : model_(model), batch_(batch), rows_(rows.begin(), rows.end()) {}

    /// Fills logits (one per row, in `rows` order). Keeps activations when `keep` is set.
    void forward(std::span<double> logits, bool keep) {
        const auto H = static_cast<Eigen::Index>(model_.hidden_dim());
        const auto n = static_cast<Eigen::Index>(rows_.size());
        const auto wh = model_.recurrent_weights();
        const std::size_t steps = batch_.lengths[rows_.front()];
        // Input projection plus bias for every symbol.
        const Matrix proj = (model_.embedding() * model_.input_weights()).rowwise() + model_.gate_bias().transpose();

        h_ = Matrix::Zero(n, H);
        c_ = Matrix::Zero(n, H);
        if (keep) {
            gates_.assign(steps, Matrix{});
            cells_.assign(steps, Matrix{});
            hiddens_.assign(steps, Matrix{});
        }
        Matrix z;
        for (std::size_t t = 0; t < steps; ++t) {
            const auto active = active_rows(t);
            z.resize(active, 4 * H);
            for (Eigen::Index r = 0; r < active; ++r) z.row(r) = proj.row(symbol(r, t));
            z.noalias() += h_.topRows(active) * wh;
            auto sig = [](auto&& block) { block = (1.0 + (-block.array()).exp()).inverse().matrix(); };
            sig(z.leftCols(2 * H));
            sig(z.rightCols(H));
            z.middleCols(2 * H, H) = z.middleCols(2 * H, H).array().tanh().matrix();
            const auto ig = z.leftCols(H).array();
            const auto fg = z.middleCols(H, H).array();
            const auto gg = z.middleCols(2 * H, H).array();
            const auto og = z.rightCols(H).array();
            c_.topRows(active) = (fg * c_.topRows(active).array() + ig * gg).matrix();
            h_.topRows(active) = (og * c_.topRows(active).array().tanh()).matrix();
            if (keep) {
                gates_[t] = z;
                cells_[t] = c_.topRows(active);
                hiddens_[t] = h_.topRows(active);
            }
        }
        const Eigen::VectorXd out = (h_ * model_.head_weights()).array() + model_.head_bias();
        for (Eigen::Index r = 0; r < n; ++r) logits[static_cast<std::size_t>(r)] = out[r];
    }

    /// Accumulates dLoss/dparams into grad given dLoss/dlogit per row.
    void backward(std::span<const double> dlogits, Eigen::VectorXd& grad) const {
        const auto H = static_cast<Eigen::Index>(model_.hidden_dim());
        const auto E = static_cast<Eigen::Index>(model_.embed_dim());
        const auto n = static_cast<Eigen::Index>(rows_.size());
        const auto wh = model_.recurrent_weights();
        Eigen::Map<Matrix> g_emb(grad.data() + model_.off_emb(), lstm_vocab, E);
        Eigen::Map<Matrix> g_wx(grad.data() + model_.off_wx(), E, 4 * H);
        Eigen::Map<Matrix> g_wh(grad.data() + model_.off_wh(), H, 4 * H);
        Eigen::Map<Eigen::VectorXd> g_b(grad.data() + model_.off_b(), 4 * H);
        Eigen::Map<Eigen::VectorXd> g_w(grad.data() + model_.off_w(), H);
        double& g_bout = grad[static_cast<Eigen::Index>(model_.off_w()) + H];

        // Owned copy: Eigen's reductions peel by address alignment, and the
        // caller's buffer alignment varies between threads.
        const Eigen::VectorXd dl = Eigen::Map<const Eigen::VectorXd>(dlogits.data(), n);
        g_w.noalias() += h_.transpose() * dl;
        g_bout += dl.sum();
        Matrix dh = dl * model_.head_weights().transpose();
        Matrix dc = Matrix::Zero(n, H);

        // Gradient with respect to the per-symbol projection table.
        Matrix d_proj = Matrix::Zero(lstm_vocab, 4 * H);
        Matrix dz;
        const std::size_t steps = gates_.size();
        for (std::size_t t = steps; t-- > 0;) {
            const auto active = active_rows(t);
            const Matrix& a = gates_[t];
            const auto ig = a.leftCols(H).array();
            const auto fg = a.middleCols(H, H).array();
            const auto gg = a.middleCols(2 * H, H).array();
            const auto og = a.rightCols(H).array();
            const Eigen::ArrayXXd tc = cells_[t].array().tanh();
            const Eigen::ArrayXXd dht = dh.topRows(active).array();
            const Eigen::ArrayXXd dct = dc.topRows(active).array() + dht * og * (1.0 - tc.square());
            dz.resize(active, 4 * H);
            dz.leftCols(H) = (dct * gg * ig * (1.0 - ig)).matrix();
            if (t > 0) {
                dz.middleCols(H, H) = (dct * cells_[t - 1].topRows(active).array() * fg * (1.0 - fg)).matrix();
            } else {
                dz.middleCols(H, H).setZero();
            }
            dz.middleCols(2 * H, H) = (dct * ig * (1.0 - gg.square())).matrix();
            dz.rightCols(H) = (dht * tc * og * (1.0 - og)).matrix();

            for (Eigen::Index r = 0; r < active; ++r) d_proj.row(symbol(r, t)) += dz.row(r);
            if (t > 0) g_wh.noalias() += hiddens_[t - 1].topRows(active).transpose() * dz;
            dh.topRows(active).noalias() = dz * wh.transpose();
            dc.topRows(active) = (dct * fg).matrix();
        }
        g_emb.noalias() += d_proj * model_.input_weights().transpose();
        g_wx.noalias() += model_.embedding().transpose() * d_proj;
        g_b += d_proj.colwise().sum().transpose();
    }

private:
    Eigen::Index active_rows(std::size_t t) const {
        Eigen::Index n = 0;
        while (static_cast<std::size_t>(n) < rows_.size() && batch_.lengths[rows_[static_cast<std::size_t>(n)]] > t) ++n;
        return n;
    }
    Eigen::Index symbol(Eigen::Index r, std::size_t t) const {
        return batch_.at(rows_[static_cast<std::size_t>(r)], t);
    }

    const LstmModel& model_;
    const SequenceBatch& batch_;
    std::vector<std::size_t> rows_;
    Matrix h_;
    Matrix c_;
    std::vector<Matrix> gates_;
    std::vector<Matrix> cells_;
    std::vector<Matrix> hiddens_;
};

/// Rows of `subset` ordered longest-first (stable), cut into fixed-size chunks.
inline std::vector<std::vector<std::size_t>> make_chunks(const SequenceBatch& batch, std::span<const std::size_t> subset) {
    std::vector<std::size_t> order(subset.begin(), subset.end());
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return batch.lengths[a] > batch.lengths[b]; });
    std::vector<std::vector<std::size_t>> chunks;
    for (std::size_t i = 0; i < order.size(); i += lstm_chunk_rows) {
        const auto end = std::min(order.size(), i + lstm_chunk_rows);
        chunks.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                            order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return chunks;
}

}  // namespace detail

/// Logit per row, read at each row's last valid step; padding is never read.
inline std::vector<double> forward(const LstmModel& model, const SequenceBatch& batch, unsigned threads = 1) {
    std::vector<double> logits(batch.rows());
    std::vector<std::size_t> all(batch.rows());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const auto chunks = detail::make_chunks(batch, all);
    parallel_for(chunks.size(), threads, [&](std::size_t k) {
        detail::LstmChunk chunk(model, batch, chunks[k]);
        std::vector<double> out(chunks[k].size());
        chunk.forward(out, false);
        for (std::size_t i = 0; i < out.size(); ++i) logits[chunks[k][i]] = out[i];
    });
    return logits;
}

/// Mean binary cross-entropy over `subset` of the batch; writes the gradient
/// of that mean into `grad` when given (resized and zeroed here).
inline double lstm_loss(const LstmModel& model, const SequenceBatch& batch, std::span<const std::size_t> subset,
                        Eigen::VectorXd* grad = nullptr, unsigned threads = 1) {
    const auto chunks = detail::make_chunks(batch, subset);
    const auto n = static_cast<double>(subset.size());
    std::vector<double> chunk_loss(chunks.size(), 0.0);
    std::vector<Eigen::VectorXd> chunk_grad(grad ? chunks.size() : 0);
    parallel_for(chunks.size(), threads, [&](std::size_t k) {
        detail::LstmChunk chunk(model, batch, chunks[k]);
        std::vector<double> logits(chunks[k].size());
        chunk.forward(logits, grad != nullptr);
        std::vector<double> dlogits(logits.size());
        for (std::size_t i = 0; i < logits.size(); ++i) {
            const int y = batch.labels[chunks[k][i]];
            chunk_loss[k] += logit_loss(logits[i], y);
            dlogits[i] = (sigmoid(logits[i]) - y) / n;
        }
        if (grad) {
            chunk_grad[k] = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.parameter_count()));
            chunk.backward(dlogits, chunk_grad[k]);
        }
    });
    double loss = 0.0;
    for (const double l : chunk_loss) loss += l;
    if (grad) {
        *grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.parameter_count()));
        for (const auto& g : chunk_grad) *grad += g;
    }
    return loss / n;
}

inline double lstm_loss(const LstmModel& model, const SequenceBatch& batch, Eigen::VectorXd* grad = nullptr,
                        unsigned threads = 1) {
    std::vector<std::size_t> all(batch.rows());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return lstm_loss(model, batch, all, grad, threads);
}

inline std::vector<double> predict_proba(const LstmModel& model, std::span<const SymbolSequence> seqs,
                                         unsigned threads = 1) {
    if (seqs.empty()) return {};
    const auto batch = SequenceBatch::make(seqs);
    auto logits = forward(model, batch, threads);
    for (double& v : logits) v = sigmoid(v);
    return logits;
}

/// Scores only the first min(window, length) symbols with the full-sequence model.
inline std::vector<double> predict_proba_prefix(const LstmModel& model, std::span<const SymbolSequence> seqs,
                                                std::size_t window, unsigned threads = 1) {
    if (window == 0) throw DomainError("prefix window must be at least 1");
    std::vector<SymbolSequence> prefixes;
    prefixes.reserve(seqs.size());
    for (const auto& s : seqs) {
        prefixes.emplace_back(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(std::min(window, s.size())));
    }
    return predict_proba(model, prefixes, threads);
}

inline double predict_proba_prefix(const LstmModel& model, const SymbolSequence& symbols, std::size_t window) {
    return predict_proba_prefix(model, std::span<const SymbolSequence>(&symbols, 1), window).front();
}

struct LstmFit {
    LstmModel model;
    LossCurve curve;
    std::size_t best_epoch = 0;
};

/// Adam on mean BCE-with-logits, global-norm clipping, and early stopping on
/// validation loss. Batches group rows of similar length; row order within a
/// length and the batch order are reshuffled from the seed every epoch.
inline LstmFit train_lstm(std::span<const SymbolSequence> train, std::span<const int> train_labels,
                          std::span<const SymbolSequence> val, std::span<const int> val_labels,
                          const LstmConfig& cfg = {}) {
    if (train.empty()) throw DomainError("empty training set");
    if (cfg.batch == 0 || cfg.embed_dim == 0 || cfg.hidden_dim == 0) throw ConfigError("LSTM sizes must be positive");
    for (const auto& span : {train, val}) {
        for (const auto& s : span) {
            if (s.size() < 2 || s.size() > 1000) {
                throw DomainError("training sequences must have length 2..1000, got " + std::to_string(s.size()));
            }
        }
    }
    for (const auto& labels : {train_labels, val_labels}) {
        for (const int y : labels) {
            if (y != 0 && y != 1) throw DomainError("labels must be 0 or 1");
        }
    }
    const auto train_batch = SequenceBatch::make(train, train_labels);
    const bool has_val = !val.empty();
    const auto val_batch = has_val ? SequenceBatch::make(val, val_labels) : SequenceBatch{};

    LstmFit fit;
    fit.model = LstmModel::initialized(cfg.embed_dim, cfg.hidden_dim, cfg.seed);
    auto& params = fit.model.params();
    const auto P = params.size();
    Eigen::VectorXd m1 = Eigen::VectorXd::Zero(P);
    Eigen::VectorXd m2 = Eigen::VectorXd::Zero(P);
    Eigen::VectorXd grad;
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;
    std::size_t step = 0;

    Eigen::VectorXd best_params = params;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, epoch + 1));
        std::vector<std::size_t> order(train.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(std::span<std::size_t>(order));
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return train_batch.lengths[a] < train_batch.lengths[b];
        });
        std::vector<std::span<const std::size_t>> batches;
        for (std::size_t i = 0; i < order.size(); i += cfg.batch) {
            batches.emplace_back(order.data() + i, std::min(cfg.batch, order.size() - i));
        }
        rng.shuffle(std::span<std::span<const std::size_t>>(batches));

        double epoch_loss = 0.0;
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            const double loss = lstm_loss(fit.model, train_batch, batches[bi], &grad, cfg.threads);
            if (!std::isfinite(loss) || !grad.allFinite()) {
                throw TrainingError("LSTM: non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                                    std::to_string(bi + 1));
            }
            epoch_loss += loss * static_cast<double>(batches[bi].size());
            const double norm = grad.norm();
            if (cfg.grad_clip > 0.0 && norm > cfg.grad_clip) grad *= cfg.grad_clip / norm;
            ++step;
            m1 = beta1 * m1 + (1.0 - beta1) * grad;
            m2 = beta2 * m2 + (1.0 - beta2) * grad.cwiseAbs2();
            const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            params.array() -= cfg.lr * (m1.array() / c1) / ((m2.array() / c2).sqrt() + eps);
        }
        fit.curve.train.push_back(epoch_loss / static_cast<double>(train.size()));
        if (!has_val) {
            best_params = params;
            fit.best_epoch = epoch + 1;
            continue;
        }
        const double val_loss = lstm_loss(fit.model, val_batch, nullptr, cfg.threads);
        if (!std::isfinite(val_loss)) {
            throw TrainingError("LSTM: non-finite validation loss at epoch " + std::to_string(epoch + 1));
        }
        fit.curve.val.push_back(val_loss);
        if (val_loss < best_val) {
            best_val = val_loss;
            best_params = params;
            fit.best_epoch = epoch + 1;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    params = best_params;
    return fit;
}

}  // namespace frustra
