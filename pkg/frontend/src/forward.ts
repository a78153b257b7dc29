/** Differentiable forward model of the irreversible two-tissue system.
 *
 * Computes frame-averaged tissue curves
 *   C(t) = (1 - vb) * (h * A)(t) + vb * A(t),
 *   h(t) = k1/(k2+k3) * (k3 + k2 exp(-(k2+k3) t)),
 * exactly for the piecewise-linear input A resampled on an internal fine
 * grid (default 1 s), in double precision, together with the analytic
 * Jacobian with respect to (k1, k2, k3, vb). Rates are per minute, times in
 * seconds at the API boundary.
 *
 * The convolution y = (e^{-st} * A) obeys y' = A - s y and is propagated by
 * the exact per-segment recurrence; running integrals follow from
 * int y = (int A - y)/s, so frame averages carry no quadrature error. The
 * sensitivity v = (t e^{-st} * A) = -dy/ds gets the matching exact update.
 */

import { FrameSchedule, InputCurve, interpCurve } from "./schedule.js";

const SEC_PER_MIN = 60.0;

/** P = int_0^u e^{-s(u-w)} dw, Q = int_0^u w e^{-s(u-w)} dw. */
function pq(s: number, u: number): [number, number] {
  const x = s * u;
  if (x < 1e-6) {
    return [
      u * (1.0 - 0.5 * x + (x * x) / 6.0 - (x * x * x) / 24.0),
      u * u * (0.5 - x / 6.0 + (x * x) / 24.0),
    ];
  }
  const p = -Math.expm1(-x) / s;
  return [p, (u - p) / s];
}

/** R = int e^{-s(u-w)} P(w) dw, S = int e^{-s(u-w)} Q(w) dw. */
function rs(s: number, u: number, e: number, p: number, q: number): [number, number] {
  const x = s * u;
  if (x < 1e-4) {
    return [
      u * u * (0.5 - x / 3.0 + (x * x) / 8.0 - (x * x * x) / 30.0),
      u * u * u * (1.0 / 6.0 - x / 12.0 + (x * x) / 40.0),
    ];
  }
  const r = (p - u * e) / s;
  return [r, (q - r) / s];
}

export class ForwardOperator {
  readonly nFrames: number;
  private readonly dt: number;
  private readonly a: Float64Array;
  private readonly bnode: Int32Array;
  private readonly boff: Float64Array;
  private readonly zb: Float64Array;
  private readonly izb: Float64Array;
  private readonly durMin: Float64Array;

  constructor(curve: InputCurve, schedule: FrameSchedule, readonly fineStepS = 1.0) {
    if (fineStepS <= 0) throw new Error("fineStepS must be > 0");
    const lastStart = schedule.starts[schedule.nFrames - 1];
    if (curve.times[curve.times.length - 1] < lastStart - 1e-6) {
      throw new Error(
        `input curve ends at ${curve.times[curve.times.length - 1]} s, ` +
          `before the last frame starts (${lastStart} s)`,
      );
    }
    this.nFrames = schedule.nFrames;
    const endMin = schedule.endTime / SEC_PER_MIN;
    this.dt = fineStepS / SEC_PER_MIN;
    const n = Math.ceil(endMin / this.dt - 1e-9);

    this.a = new Float64Array(n + 1);
    for (let j = 0; j <= n; j++) this.a[j] = interpCurve(curve, j * fineStepS);

    // exact running integrals of the piecewise-linear input
    const z = new Float64Array(n + 1);
    const iz = new Float64Array(n + 1);
    for (let j = 0; j < n; j++) {
      z[j + 1] = z[j] + 0.5 * (this.a[j] + this.a[j + 1]) * this.dt;
      iz[j + 1] =
        iz[j] +
        0.5 * (z[j] + z[j + 1]) * this.dt -
        ((this.a[j + 1] - this.a[j]) * this.dt * this.dt) / 12.0;
    }

    const bounds = schedule.boundaries;
    const nb = bounds.length;
    this.bnode = new Int32Array(nb);
    this.boff = new Float64Array(nb);
    this.zb = new Float64Array(nb);
    this.izb = new Float64Array(nb);
    for (let k = 0; k < nb; k++) {
      const bMin = bounds[k] / SEC_PER_MIN;
      let node = Math.floor(bMin / this.dt + 1e-9);
      if (node > n) node = n;
      let off = bMin - node * this.dt;
      if (off < 1e-12) off = 0.0;
      this.bnode[k] = node;
      this.boff[k] = off;
      const slope = node < n ? (this.a[node + 1] - this.a[node]) / this.dt : 0.0;
      const aB = this.a[node] + off * slope;
      this.zb[k] = z[node] + 0.5 * (this.a[node] + aB) * off;
      this.izb[k] =
        iz[node] + 0.5 * (z[node] + this.zb[k]) * off - ((aB - this.a[node]) * off * off) / 12.0;
    }
    this.durMin = new Float64Array(this.nFrames);
    for (let i = 0; i < this.nFrames; i++) this.durMin[i] = schedule.durations[i] / SEC_PER_MIN;
  }

  /** Frame averages of A(t); exactly the vb = 1 output. */
  frameAveragedInput(): Float64Array {
    const out = new Float64Array(this.nFrames);
    for (let i = 0; i < this.nFrames; i++) {
      out[i] = (this.zb[i + 1] - this.zb[i]) / this.durMin[i];
    }
    return out;
  }

  /** March y (and optionally v) along the grid, recording boundary values. */
  private convAtBounds(s: number, yb: Float64Array, vbOut: Float64Array | null): void {
    const { a, dt, bnode, boff } = this;
    const n = a.length - 1;
    const nb = bnode.length;
    const e = Math.exp(-s * dt);
    const [p, q] = pq(s, dt);
    const [r, sv] = vbOut ? rs(s, dt, e, p, q) : [0, 0];
    const c1 = q / dt;
    const c0 = p - c1;

    let y = 0.0;
    let v = 0.0;
    let k = 0;
    for (let j = 0; j < n; j++) {
      while (k < nb && bnode[k] === j) {
        const u = boff[k];
        if (u === 0.0) {
          yb[k] = y;
          if (vbOut) vbOut[k] = v;
        } else {
          const m = (a[j + 1] - a[j]) / dt;
          const eu = Math.exp(-s * u);
          const [pu, qu] = pq(s, u);
          yb[k] = eu * y + a[j] * pu + m * qu;
          if (vbOut) {
            const [ru, svu] = rs(s, u, eu, pu, qu);
            vbOut[k] = eu * v + u * eu * y + a[j] * ru + m * svu;
          }
        }
        k++;
      }
      const m = (a[j + 1] - a[j]) / dt;
      if (vbOut) v = e * v + dt * e * y + a[j] * r + m * sv;
      y = e * y + c0 * a[j] + c1 * a[j + 1];
    }
    while (k < nb) {
      yb[k] = y;
      if (vbOut) vbOut[k] = v;
      k++;
    }
  }

  tacInto(k1: number, k2: number, k3: number, vb: number, out: Float64Array, o = 0): void {
    const s = k2 + k3;
    const nb = this.bnode.length;
    const yb = this._yb ?? (this._yb = new Float64Array(nb));
    if (s >= 1e-8) this.convAtBounds(s, yb, null);
    for (let i = 0; i < this.nFrames; i++) {
      const abar = (this.zb[i + 1] - this.zb[i]) / this.durMin[i];
      const zbar = (this.izb[i + 1] - this.izb[i]) / this.durMin[i];
      let conv: number;
      if (s < 1e-8) {
        conv = k1 * zbar; // s -> 0 limit: flat impulse response at k1
      } else {
        const ybar = (yb[i + 1] - yb[i]) / this.durMin[i];
        conv = (k1 / s) * (k3 * zbar + (k2 * (abar - ybar)) / s);
      }
      out[o + i] = (1.0 - vb) * conv + vb * abar;
    }
  }

  private _yb: Float64Array | null = null;
  private _vb: Float64Array | null = null;

  tac(k1: number, k2: number, k3: number, vb: number): Float64Array {
    const out = new Float64Array(this.nFrames);
    this.tacInto(k1, k2, k3, vb, out);
    return out;
  }

  /** TAC plus the Jacobian d tac_i / d (k1, k2, k3, vb), jac row-major
   * [nFrames][4]. Near s = 0 the rate sum is floored, which only perturbs
   * search directions, never the model value path. */
  tacJacInto(
    k1: number,
    k2: number,
    k3: number,
    vb: number,
    tac: Float64Array,
    jac: Float64Array,
  ): void {
    const s = k2 + k3;
    const sEff = s > 1e-6 ? s : 1e-6;
    const nb = this.bnode.length;
    const yb = this._yb ?? (this._yb = new Float64Array(nb));
    const vbArr = this._vb ?? (this._vb = new Float64Array(nb));
    this.convAtBounds(sEff, yb, vbArr);
    for (let i = 0; i < this.nFrames; i++) {
      const d = this.durMin[i];
      const abar = (this.zb[i + 1] - this.zb[i]) / d;
      const zbar = (this.izb[i + 1] - this.izb[i]) / d;
      const ybar = (yb[i + 1] - yb[i]) / d;
      const vbar = (vbArr[i + 1] - vbArr[i]) / d;
      const yfrm = (abar - ybar) / sEff;
      const dyfrm = (vbar - yfrm) / sEff;
      const base = (k3 * zbar + k2 * yfrm) / sEff;
      const conv = k1 * base;
      tac[i] = (1.0 - vb) * conv + vb * abar;
      jac[i * 4] = (1.0 - vb) * base;
      jac[i * 4 + 1] =
        (1.0 - vb) * k1 * ((k3 * (yfrm - zbar)) / (sEff * sEff) + (k2 / sEff) * dyfrm);
      jac[i * 4 + 2] =
        (1.0 - vb) * k1 * ((k2 * (zbar - yfrm)) / (sEff * sEff) + (k2 / sEff) * dyfrm);
      jac[i * 4 + 3] = abar - conv;
    }
  }
}
