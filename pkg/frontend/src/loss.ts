/** Self-supervised objective: reconstruct the measured TACs through the
 * tissue forward model from the predicted parameter map.
 *
 * loss = mean over masked voxels of the per-voxel MSE (over real frames)
 * between C(params_voxel) and the measured curve. The gradient with respect
 * to all four parameter channels is assembled from the forward operator's
 * analytic Jacobian in double precision.
 */

import { ForwardOperator } from "./forward.js";
import { Nd } from "./nd.js";

export class TacReconstructionLoss {
  private readonly tacBuf: Float64Array;
  private readonly jacBuf: Float64Array;

  constructor(readonly op: ForwardOperator) {
    this.tacBuf = new Float64Array(op.nFrames);
    this.jacBuf = new Float64Array(op.nFrames * 4);
  }

  /** Loss only (no gradient); params is [1, Y, X, 4]. */
  value(params: Nd, measured: Float64Array, maskIdx: Int32Array): number {
    return this.run(params, measured, maskIdx, null);
  }

  /** Loss and d loss / d params (same shape as params, zero off-mask). */
  valueAndGrad(
    params: Nd,
    measured: Float64Array,
    maskIdx: Int32Array,
  ): { loss: number; grad: Nd } {
    const grad = Nd.zeros(params.shape);
    const loss = this.run(params, measured, maskIdx, grad);
    return { loss, grad };
  }

  private run(
    params: Nd,
    measured: Float64Array,
    maskIdx: Int32Array,
    grad: Nd | null,
  ): number {
    const nT = this.op.nFrames;
    const nMask = maskIdx.length;
    if (nMask === 0) throw new Error("loss needs at least one masked voxel");
    const p = params.data;
    const tac = this.tacBuf;
    const jac = this.jacBuf;
    let total = 0.0;
    const wGrad = grad ? 2.0 / (nT * nMask) : 0.0;
    for (let m = 0; m < nMask; m++) {
      const vox = maskIdx[m];
      const o = vox * 4;
      if (grad) {
        this.op.tacJacInto(p[o], p[o + 1], p[o + 2], p[o + 3], tac, jac);
      } else {
        this.op.tacInto(p[o], p[o + 1], p[o + 2], p[o + 3], tac);
      }
      let sse = 0.0;
      let g0 = 0.0;
      let g1 = 0.0;
      let g2 = 0.0;
      let g3 = 0.0;
      const yOff = vox * nT;
      for (let i = 0; i < nT; i++) {
        const r = tac[i] - measured[yOff + i];
        sse += r * r;
        if (grad) {
          g0 += r * jac[i * 4];
          g1 += r * jac[i * 4 + 1];
          g2 += r * jac[i * 4 + 2];
          g3 += r * jac[i * 4 + 3];
        }
      }
      total += sse / nT;
      if (grad) {
        grad.data[o] = wGrad * g0;
        grad.data[o + 1] = wGrad * g1;
        grad.data[o + 2] = wGrad * g2;
        grad.data[o + 3] = wGrad * g3;
      }
    }
    return total / nMask;
  }
}
