#include "patchdrop/tokenizer.hpp"

#include <string>

#include "patchdrop/flops.hpp"
#include "patchdrop/ops.hpp"

namespace patchdrop {

const std::vector<std::size_t>& TokenBatch::kept_for(std::size_t b) const {
  if (!kept_indices) throw Error("token batch has no dropout applied");
  const auto& lists = *kept_indices;
  return lists.size() == 1 ? lists[0] : lists.at(b);
}

ImageBatch ImageBatch::wrap(Tensor t) {
  if (t.rank() != 4) {
    throw ShapeMismatch("image batch must be [B, C, H, W], got " +
                        shape_str(t.shape()));
  }
  ImageBatch ib;
  ib.batch = t.extent(0);
  ib.channels = t.extent(1);
  ib.height = t.extent(2);
  ib.width = t.extent(3);
  ib.data = std::move(t);
  return ib;
}

Tensor patchify(const ImageBatch& images, std::size_t patch) {
  const std::size_t B = images.batch, C = images.channels, H = images.height,
                    W = images.width;
  if (patch == 0 || H % patch != 0 || W % patch != 0) {
    throw IndivisibleImage("image " + std::to_string(H) + "x" +
                           std::to_string(W) +
                           " is not divisible by patch size " +
                           std::to_string(patch));
  }
  const std::size_t gr = H / patch, gc = W / patch;
  const std::size_t N = gr * gc;
  const std::size_t row = patch * patch * C;

  if (flops::count_only()) return Tensor::hollow({B, N, row});

  Tensor out = Tensor::zeros({B, N, row});
  const double* src = images.data.values().data();
  double* dst = out.values_mut().data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t pr = 0; pr < gr; ++pr) {
      for (std::size_t pc = 0; pc < gc; ++pc) {
        double* prow = dst + ((b * N + pr * gc + pc) * row);
        std::size_t o = 0;
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t y = 0; y < patch; ++y) {
            const double* line =
                src + (((b * C + c) * H + pr * patch + y) * W + pc * patch);
            for (std::size_t x = 0; x < patch; ++x) prow[o++] = line[x];
          }
        }
      }
    }
  }
  return out;
}

ImageBatch unpatchify(const Tensor& patches, std::size_t patch,
                      std::size_t channels, std::size_t height,
                      std::size_t width) {
  if (patches.rank() != 3) {
    throw ShapeMismatch("unpatchify expects [B, N, P*P*C]");
  }
  const std::size_t B = patches.extent(0);
  const std::size_t gr = height / patch, gc = width / patch;
  if (patches.extent(1) != gr * gc ||
      patches.extent(2) != patch * patch * channels) {
    throw ShapeMismatch("unpatchify geometry mismatch for " +
                        shape_str(patches.shape()));
  }
  Tensor img = Tensor::zeros({B, channels, height, width});
  const double* src = patches.values().data();
  double* dst = img.values_mut().data();
  const std::size_t row = patch * patch * channels;
  const std::size_t N = gr * gc;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t pr = 0; pr < gr; ++pr) {
      for (std::size_t pc = 0; pc < gc; ++pc) {
        const double* prow = src + ((b * N + pr * gc + pc) * row);
        std::size_t o = 0;
        for (std::size_t c = 0; c < channels; ++c) {
          for (std::size_t y = 0; y < patch; ++y) {
            double* line = dst + (((b * channels + c) * height + pr * patch +
                                   y) *
                                      width +
                                  pc * patch);
            for (std::size_t x = 0; x < patch; ++x) line[x] = prow[o++];
          }
        }
      }
    }
  }
  return ImageBatch::wrap(std::move(img));
}

TokenBatch embed_tokens(const Tensor& patches, const Tensor& proj,
                        const Tensor& pos, const Tensor& cls,
                        std::size_t grid_rows, std::size_t grid_cols) {
  if (patches.rank() != 3) {
    throw ShapeMismatch("embed_tokens expects patches of rank 3");
  }
  const std::size_t B = patches.extent(0), N = patches.extent(1);
  if (N != grid_rows * grid_cols) {
    throw ShapeMismatch("patch count does not match grid geometry");
  }
  if (proj.rank() != 2 || proj.extent(0) != patches.extent(2)) {
    throw ShapeMismatch("projection shape " + shape_str(proj.shape()) +
                        " does not accept patch rows of length " +
                        std::to_string(patches.extent(2)));
  }
  const std::size_t d = proj.extent(1);
  if (pos.shape() != Shape{N + 1, d}) {
    throw ShapeMismatch("positional table must be [" + std::to_string(N + 1) +
                        ", " + std::to_string(d) + "], got " +
                        shape_str(pos.shape()));
  }
  if (cls.shape() != Shape{d}) {
    throw ShapeMismatch("cls token must be [" + std::to_string(d) + "]");
  }

  Tensor projected = ops::matmul(patches, proj);  // [B, N, d]

  Tensor pos3 = ops::reshape(pos, {1, N + 1, d});
  std::vector<std::size_t> rest(N);
  for (std::size_t i = 0; i < N; ++i) rest[i] = i + 1;
  Tensor pos_rest = ops::reshape(ops::gather_rows(pos3, rest), {N, d});
  Tensor with_pos = ops::add(projected, pos_rest);  // [N, d] over batch

  Tensor pos0 = ops::reshape(
      ops::gather_rows(pos3, std::vector<std::size_t>{0}), {d});
  Tensor cls_tok = ops::add(cls, pos0);
  Tensor batch_rows = flops::count_only() ? Tensor::hollow({B, 1, d})
                                          : Tensor::zeros({B, 1, d});
  Tensor cls_rows = ops::add(batch_rows, cls_tok);  // [B, 1, d]

  TokenBatch tb;
  tb.tokens = ops::concat_rows(cls_rows, with_pos);
  tb.grid_rows = grid_rows;
  tb.grid_cols = grid_cols;
  tb.has_cls = true;
  return tb;
}

}  // namespace patchdrop
