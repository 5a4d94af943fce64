#include "cpga/model.hpp"

#include "cpga/error.hpp"

namespace cpga {

namespace ops = nn::ops;

template <typename T>
void ClipBatch<T>::validate() const {
    if (frames <= 0) throw InvalidArgument("clip batch has no frames");
    const auto& s = lq.shape;
    if (s.c != 1 || s.n % frames != 0 || s.n == 0) throw InvalidArgument("clip batch: LQ must be (N * frames, 1, H, W)");
    if (pred.shape != s) throw InvalidArgument("clip batch: predictive planes " + pred.shape.str() + " vs " + s.str());
    if (mv.shape != nn::Shape{s.n, 2, s.h, s.w}) throw InvalidArgument("clip batch: MV maps must be (N * frames, 2, H, W)");
    if (residual.shape != nn::Shape{s.n / frames, 1, s.h, s.w})
        throw InvalidArgument("clip batch: residual must be (N, 1, H, W)");
}

template <typename T>
CpgaModel<T>::CpgaModel(const ModelConfig& cfg) : cfg_(cfg), store_(cfg.seed) {
    cfg_.validate();
    ita_ = std::make_unique<ita::TemporalAggregation<T>>(store_, cfg_);
    mna_ = std::make_unique<mna::MultiScaleAggregation<T>>(store_, cfg_);
    qe_ = std::make_unique<qe::QualityEnhancement<T>>(store_, cfg_);
}

template <typename T>
nn::Var<T> CpgaModel<T>::forward(const nn::Var<T>& lq, const nn::Var<T>& pred, const nn::Var<T>& mv,
                                 const nn::Var<T>& residual) const {
    const int F = cfg_.frames();
    const auto& s = lq.shape();
    if (s.n % F != 0) throw InvalidArgument("forward: batch of " + std::to_string(s.n) + " planes is not a multiple of " + std::to_string(F) + " frames");
    if (s.h % 4 != 0 || s.w % 4 != 0) throw InvalidArgument("forward: H and W must be divisible by 4; pad first");

    const auto pred_in = cfg_.priors.use_pred ? pred : lq;
    const auto mv_in = cfg_.priors.use_mv ? mv : nn::Var<T>(nn::Tensor<T>(mv.shape()));
    const auto resid_in = cfg_.priors.use_resid ? residual : nn::Var<T>(nn::Tensor<T>(residual.shape()));

    const auto f_ta = ita_->forward(lq, pred_in, mv_in);
    const auto f_sa = mna_->forward(f_ta, resid_in);
    return qe_->forward(f_sa, ops::select_frame(lq, F, cfg_.radius));
}

template <typename T>
nn::Var<T> CpgaModel<T>::forward(const ClipBatch<T>& batch) const {
    batch.validate();
    if (batch.frames != cfg_.frames())
        throw InvalidArgument("clip has " + std::to_string(batch.frames) + " frames, model expects " +
                              std::to_string(cfg_.frames()));
    return forward(nn::Var<T>(batch.lq), nn::Var<T>(batch.pred), nn::Var<T>(batch.mv), nn::Var<T>(batch.residual));
}

template struct ClipBatch<float>;
template struct ClipBatch<double>;
template class CpgaModel<float>;
template class CpgaModel<double>;

}  // namespace cpga
