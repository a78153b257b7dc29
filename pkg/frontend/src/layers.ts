/** Minimal typed-array NN layers for [T, Y, X, C] tensors.
 *
 * Every layer keeps what it needs from forward() and implements an explicit
 * backward() returning the input gradient while accumulating parameter
 * gradients. Stride is always 1 for convolutions ("same" padding, or valid
 * over the leading time axis for the head's time-collapsing kernel); pooling
 * and upsampling use factor 2. All backward passes are checked against
 * finite differences in the test suite.
 */

import { Nd } from "./nd.js";
import { Rng } from "./rng.js";

export interface Param {
  name: string;
  value: Nd;
  grad: Nd;
}

export class Conv3d {
  readonly w: Nd; // [kt, ky, kx, cin, cout]
  readonly b: Nd; // [cout]
  readonly gw: Nd;
  readonly gb: Nd;
  private x: Nd | null = null;

  constructor(
    readonly name: string,
    readonly kt: number,
    readonly ky: number,
    readonly kx: number,
    readonly cin: number,
    readonly cout: number,
    rng: Rng,
    readonly padMode: "same" | "validT" = "same",
  ) {
    const fanIn = kt * ky * kx * cin;
    this.w = Nd.randn([kt, ky, kx, cin, cout], Math.sqrt(2.0 / fanIn), rng);
    this.b = Nd.zeros([cout]);
    this.gw = Nd.zeros(this.w.shape);
    this.gb = Nd.zeros(this.b.shape);
  }

  params(): Param[] {
    return [
      { name: `${this.name}.w`, value: this.w, grad: this.gw },
      { name: `${this.name}.b`, value: this.b, grad: this.gb },
    ];
  }

  private pads(): [number, number, number] {
    const pt = this.padMode === "validT" ? 0 : (this.kt - 1) >> 1;
    return [pt, (this.ky - 1) >> 1, (this.kx - 1) >> 1];
  }

  outShape(shape: readonly number[]): number[] {
    const [t, y, x] = shape;
    const tOut = this.padMode === "validT" ? t - this.kt + 1 : t;
    return [tOut, y, x, this.cout];
  }

  forward(x: Nd): Nd {
    const [t, y, xd, c] = x.shape;
    if (c !== this.cin) throw new Error(`${this.name}: got ${c} channels, want ${this.cin}`);
    const [pt, py, px] = this.pads();
    const [tOut] = this.outShape(x.shape);
    if (tOut < 1) throw new Error(`${this.name}: time axis ${t} shorter than kernel ${this.kt}`);
    const out = Nd.zeros([tOut, y, xd, this.cout]);
    const xi = x.data;
    const oy = out.data;
    const w = this.w.data;
    const b = this.b.data;
    const cin = this.cin;
    const cout = this.cout;
    const kt = this.kt;
    const ky = this.ky;
    const kx = this.kx;

    for (let i = 0; i < oy.length; i += cout) {
      for (let co = 0; co < cout; co++) oy[i + co] = b[co];
    }
    for (let to = 0; to < tOut; to++) {
      for (let dt = 0; dt < kt; dt++) {
        const ti = to + dt - pt;
        if (ti < 0 || ti >= t) continue;
        for (let yo = 0; yo < y; yo++) {
          for (let dy = 0; dy < ky; dy++) {
            const yi = yo + dy - py;
            if (yi < 0 || yi >= y) continue;
            for (let dx = 0; dx < kx; dx++) {
              const wBase = (((dt * ky + dy) * kx + dx) * cin) * cout;
              const x0 = Math.max(0, px - dx);
              const x1 = Math.min(xd, xd + px - dx);
              let oIdx = ((to * y + yo) * xd + x0) * cout;
              let iIdx = ((ti * y + yi) * xd + (x0 + dx - px)) * cin;
              for (let xo = x0; xo < x1; xo++) {
                for (let ci = 0; ci < cin; ci++) {
                  const a = xi[iIdx + ci];
                  const wOff = wBase + ci * cout;
                  for (let co = 0; co < cout; co++) oy[oIdx + co] += a * w[wOff + co];
                }
                oIdx += cout;
                iIdx += cin;
              }
            }
          }
        }
      }
    }
    this.x = x;
    return out;
  }

  backward(gy: Nd): Nd {
    const x = this.x;
    if (!x) throw new Error(`${this.name}: backward before forward`);
    const [t, y, xd] = x.shape;
    const [pt, py, px] = this.pads();
    const tOut = gy.shape[0];
    const gx = Nd.zeros(x.shape);
    const xi = x.data;
    const g = gy.data;
    const gxd = gx.data;
    const w = this.w.data;
    const gw = this.gw.data;
    const gb = this.gb.data;
    const cin = this.cin;
    const cout = this.cout;
    const kt = this.kt;
    const ky = this.ky;
    const kx = this.kx;

    for (let i = 0; i < g.length; i += cout) {
      for (let co = 0; co < cout; co++) gb[co] += g[i + co];
    }
    for (let to = 0; to < tOut; to++) {
      for (let dt = 0; dt < kt; dt++) {
        const ti = to + dt - pt;
        if (ti < 0 || ti >= t) continue;
        for (let yo = 0; yo < y; yo++) {
          for (let dy = 0; dy < ky; dy++) {
            const yi = yo + dy - py;
            if (yi < 0 || yi >= y) continue;
            for (let dx = 0; dx < kx; dx++) {
              const wBase = (((dt * ky + dy) * kx + dx) * cin) * cout;
              const x0 = Math.max(0, px - dx);
              const x1 = Math.min(xd, xd + px - dx);
              let oIdx = ((to * y + yo) * xd + x0) * cout;
              let iIdx = ((ti * y + yi) * xd + (x0 + dx - px)) * cin;
              for (let xo = x0; xo < x1; xo++) {
                for (let ci = 0; ci < cin; ci++) {
                  const a = xi[iIdx + ci];
                  const wOff = wBase + ci * cout;
                  let acc = 0.0;
                  for (let co = 0; co < cout; co++) {
                    const gv = g[oIdx + co];
                    acc += gv * w[wOff + co];
                    gw[wOff + co] += a * gv;
                  }
                  gxd[iIdx + ci] += acc;
                }
                oIdx += cout;
                iIdx += cin;
              }
            }
          }
        }
      }
    }
    this.x = null;
    return gx;
  }
}

export class Elu {
  private y: Nd | null = null;

  forward(x: Nd): Nd {
    const out = Nd.zeros(x.shape);
    const xi = x.data;
    const oy = out.data;
    for (let i = 0; i < xi.length; i++) {
      const v = xi[i];
      oy[i] = v > 0 ? v : Math.expm1(v);
    }
    this.y = out;
    return out;
  }

  backward(gy: Nd): Nd {
    const y = this.y;
    if (!y) throw new Error("elu: backward before forward");
    const gx = Nd.zeros(gy.shape);
    const g = gy.data;
    const yd = y.data;
    const o = gx.data;
    for (let i = 0; i < g.length; i++) {
      o[i] = g[i] * (yd[i] > 0 ? 1.0 : yd[i] + 1.0);
    }
    this.y = null;
    return gx;
  }
}

/** 2x2x2 max pooling, stride 2; input dims must be even. */
export class MaxPool3d {
  private argmax: Int32Array | null = null;
  private inShape: readonly number[] = [];

  forward(x: Nd): Nd {
    const [t, y, xd, c] = x.shape;
    if (t % 2 || y % 2 || xd % 2) throw new Error(`pool needs even dims, got ${x.shape}`);
    const out = Nd.zeros([t / 2, y / 2, xd / 2, c]);
    const arg = new Int32Array(out.size);
    const xi = x.data;
    const oy = out.data;
    let o = 0;
    for (let to = 0; to < t; to += 2) {
      for (let yo = 0; yo < y; yo += 2) {
        for (let xo = 0; xo < xd; xo += 2) {
          for (let ci = 0; ci < c; ci++) {
            let best = -Infinity;
            let bestIdx = -1;
            for (let dt = 0; dt < 2; dt++) {
              for (let dy = 0; dy < 2; dy++) {
                for (let dx = 0; dx < 2; dx++) {
                  const idx = ((((to + dt) * y + yo + dy) * xd) + xo + dx) * c + ci;
                  if (xi[idx] > best) {
                    best = xi[idx];
                    bestIdx = idx;
                  }
                }
              }
            }
            oy[o] = best;
            arg[o] = bestIdx;
            o++;
          }
        }
      }
    }
    this.argmax = arg;
    this.inShape = x.shape;
    return out;
  }

  backward(gy: Nd): Nd {
    if (!this.argmax) throw new Error("pool: backward before forward");
    const gx = Nd.zeros(this.inShape);
    const g = gy.data;
    for (let i = 0; i < g.length; i++) gx.data[this.argmax[i]] += g[i];
    this.argmax = null;
    return gx;
  }
}

/** Nearest-neighbor 2x upsampling along t, y and x. */
export class Upsample3d {
  private inShape: readonly number[] = [];

  forward(x: Nd): Nd {
    const [t, y, xd, c] = x.shape;
    const out = Nd.zeros([2 * t, 2 * y, 2 * xd, c]);
    const xi = x.data;
    const oy = out.data;
    for (let to = 0; to < 2 * t; to++) {
      const ti = to >> 1;
      for (let yo = 0; yo < 2 * y; yo++) {
        const yi = yo >> 1;
        let oIdx = ((to * 2 * y + yo) * 2 * xd) * c;
        for (let xo = 0; xo < 2 * xd; xo++) {
          const iIdx = ((ti * y + yi) * xd + (xo >> 1)) * c;
          for (let ci = 0; ci < c; ci++) oy[oIdx + ci] = xi[iIdx + ci];
          oIdx += c;
        }
      }
    }
    this.inShape = x.shape;
    return out;
  }

  backward(gy: Nd): Nd {
    const [t, y, xd, c] = this.inShape;
    const gx = Nd.zeros(this.inShape);
    const g = gy.data;
    const o = gx.data;
    for (let to = 0; to < 2 * t; to++) {
      const ti = to >> 1;
      for (let yo = 0; yo < 2 * y; yo++) {
        const yi = yo >> 1;
        let gIdx = ((to * 2 * y + yo) * 2 * xd) * c;
        for (let xo = 0; xo < 2 * xd; xo++) {
          const iIdx = ((ti * y + yi) * xd + (xo >> 1)) * c;
          for (let ci = 0; ci < c; ci++) o[iIdx + ci] += g[gIdx + ci];
          gIdx += c;
        }
      }
    }
    return gx;
  }
}

export function concatChannels(a: Nd, b: Nd): Nd {
  const [t, y, x, ca] = a.shape;
  const cb = b.shape[3];
  const out = Nd.zeros([t, y, x, ca + cb]);
  const n = t * y * x;
  for (let i = 0; i < n; i++) {
    out.data.set(a.data.subarray(i * ca, (i + 1) * ca), i * (ca + cb));
    out.data.set(b.data.subarray(i * cb, (i + 1) * cb), i * (ca + cb) + ca);
  }
  return out;
}

export function splitChannels(g: Nd, ca: number): [Nd, Nd] {
  const [t, y, x, c] = g.shape;
  const cb = c - ca;
  const ga = Nd.zeros([t, y, x, ca]);
  const gb = Nd.zeros([t, y, x, cb]);
  const n = t * y * x;
  for (let i = 0; i < n; i++) {
    ga.data.set(g.data.subarray(i * c, i * c + ca), i * ca);
    gb.data.set(g.data.subarray(i * c + ca, (i + 1) * c), i * cb);
  }
  return [ga, gb];
}

export function addInto(target: Nd, other: Nd): void {
  if (target.size !== other.size) throw new Error("add: size mismatch");
  for (let i = 0; i < target.data.length; i++) target.data[i] += other.data[i];
}

/** Componentwise projection onto per-channel [lo, hi].
 *
 * The exact subgradient is zero outside the interval; with leak = 0 that is
 * what backward returns. A small positive leak passes a fraction of the
 * gradient through saturated units instead, so a network whose logits
 * overshoot the box early in training can still recover - the forward
 * output is a hard projection either way. */
export class MultiClamp {
  private inside: Uint8Array | null = null;

  constructor(
    readonly lo: readonly number[],
    readonly hi: readonly number[],
    readonly leak = 0.0,
  ) {
    if (lo.length !== hi.length) throw new Error("clamp bounds mismatch");
    if (leak < 0 || leak >= 1) throw new Error("leak must be in [0, 1)");
  }

  forward(x: Nd): Nd {
    const c = x.shape[x.shape.length - 1];
    if (c !== this.lo.length) throw new Error(`clamp expects ${this.lo.length} channels`);
    const out = Nd.zeros(x.shape);
    const inside = new Uint8Array(x.size);
    for (let i = 0; i < x.data.length; i++) {
      const ch = i % c;
      const v = x.data[i];
      const w = Math.min(Math.max(v, this.lo[ch]), this.hi[ch]);
      out.data[i] = w;
      inside[i] = v > this.lo[ch] && v < this.hi[ch] ? 1 : 0;
    }
    this.inside = inside;
    return out;
  }

  backward(gy: Nd): Nd {
    if (!this.inside) throw new Error("clamp: backward before forward");
    const gx = Nd.zeros(gy.shape);
    for (let i = 0; i < gy.data.length; i++) {
      gx.data[i] = this.inside[i] ? gy.data[i] : this.leak * gy.data[i];
    }
    this.inside = null;
    return gx;
  }
}
