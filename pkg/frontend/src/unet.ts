/** Spatio-temporal UNet mapping a frame stack [T, Y, X, 1] to a per-slice
 * 4-channel kinetic parameter map [1, Y, X, 4].
 *
 * Depth four with 2x2x2 max pooling (time pools with space). Each block
 * factorizes its convolution into a spatial [1,3,3] and a temporal [3,1,1]
 * kernel with ELU activations (no batch normalization) and a short residual
 * skip; long skips concatenate encoder features into the decoder. The head
 * collapses the padded time axis with a full-extent [T,1,1] convolution to
 * 64 features, then a [1,3,3] convolution to 4 channels, and projects the
 * result onto the parameter box with the multi-clamp activation.
 */

import { Nd } from "./nd.js";
import { Rng } from "./rng.js";
import {
  Conv3d,
  Elu,
  MaxPool3d,
  MultiClamp,
  Param,
  Upsample3d,
  addInto,
  concatChannels,
  splitChannels,
} from "./layers.js";

export interface NetworkConfig {
  /** encoder widths per level (depth 4) */
  widths: [number, number, number, number];
  /** channels of the penultimate head convolution */
  headFeatures: number;
  /** padded time-axis length the head collapses */
  timeLength: number;
  clampLo: [number, number, number, number];
  clampHi: [number, number, number, number];
  /** fraction of gradient passed through saturated clamp units */
  clampLeak: number;
  seed: number;
}

export const CLAMP_LO: [number, number, number, number] = [0.01, 0.01, 0.01, 0.0];
export const CLAMP_HI: [number, number, number, number] = [2.0, 3.0, 1.0, 1.0];

export function defaultNetworkConfig(overrides: Partial<NetworkConfig> = {}): NetworkConfig {
  return {
    widths: [16, 32, 64, 128],
    headFeatures: 64,
    timeLength: 64,
    clampLo: CLAMP_LO,
    clampHi: CLAMP_HI,
    clampLeak: 0.1,
    seed: 0,
    ...overrides,
  };
}

class Block {
  private readonly spatial: Conv3d;
  private readonly temporal: Conv3d;
  private readonly proj: Conv3d | null;
  private readonly elu1 = new Elu();
  private readonly elu2 = new Elu();

  constructor(name: string, cin: number, cout: number, rng: Rng) {
    this.spatial = new Conv3d(`${name}.spatial`, 1, 3, 3, cin, cout, rng);
    this.temporal = new Conv3d(`${name}.temporal`, 3, 1, 1, cout, cout, rng);
    this.proj = cin === cout ? null : new Conv3d(`${name}.proj`, 1, 1, 1, cin, cout, rng);
  }

  forward(x: Nd): Nd {
    const h = this.elu2.forward(this.temporal.forward(this.elu1.forward(this.spatial.forward(x))));
    const out = h.clone();
    addInto(out, this.proj ? this.proj.forward(x) : x);
    return out;
  }

  backward(g: Nd): Nd {
    const gx = this.spatial.backward(
      this.elu1.backward(this.temporal.backward(this.elu2.backward(g))),
    );
    addInto(gx, this.proj ? this.proj.backward(g) : g);
    return gx;
  }

  params(): Param[] {
    const out = [...this.spatial.params(), ...this.temporal.params()];
    if (this.proj) out.push(...this.proj.params());
    return out;
  }
}

export class SpatioTemporalUNet {
  readonly config: NetworkConfig;
  private readonly enc: Block[];
  private readonly dec: Block[];
  private readonly mid: Block;
  private readonly pools: MaxPool3d[];
  private readonly ups: Upsample3d[];
  private readonly headTime: Conv3d;
  private readonly headElu = new Elu();
  private readonly headOut: Conv3d;
  private readonly clamp: MultiClamp;
  private skipChannels: number[] = [];

  constructor(config: NetworkConfig) {
    this.config = config;
    const rng = new Rng(config.seed);
    const [w0, w1, w2, w3] = config.widths;
    this.enc = [
      new Block("enc0", 1, w0, rng),
      new Block("enc1", w0, w1, rng),
      new Block("enc2", w1, w2, rng),
      new Block("enc3", w2, w3, rng),
    ];
    this.pools = [new MaxPool3d(), new MaxPool3d(), new MaxPool3d(), new MaxPool3d()];
    this.mid = new Block("mid", w3, w3, rng);
    this.ups = [new Upsample3d(), new Upsample3d(), new Upsample3d(), new Upsample3d()];
    this.dec = [
      new Block("dec3", 2 * w3, w2, rng),
      new Block("dec2", 2 * w2, w1, rng),
      new Block("dec1", 2 * w1, w0, rng),
      new Block("dec0", 2 * w0, w0, rng),
    ];
    this.headTime = new Conv3d(
      "head.time", config.timeLength, 1, 1, w0, config.headFeatures, rng, "validT",
    );
    this.headOut = new Conv3d("head.out", 1, 3, 3, config.headFeatures, 4, rng);
    // bias the raw output into the interior of the box so every channel has
    // gradient from the first step
    this.headOut.b.data.set([0.3, 0.5, 0.1, 0.1]);
    this.clamp = new MultiClamp(config.clampLo, config.clampHi, config.clampLeak);
  }

  /** x: [T, Y, X, 1] with T = config.timeLength; Y, X divisible by 16. */
  forward(x: Nd): Nd {
    const [t, y, xd] = x.shape;
    if (t !== this.config.timeLength) {
      throw new Error(`expected ${this.config.timeLength} frames, got ${t}`);
    }
    if (y % 16 || xd % 16) throw new Error(`spatial dims must be multiples of 16, got ${y}x${xd}`);
    const skips: Nd[] = [];
    let h = x;
    for (let i = 0; i < 4; i++) {
      const e = this.enc[i].forward(h);
      skips.push(e);
      h = this.pools[i].forward(e);
    }
    h = this.mid.forward(h);
    this.skipChannels = skips.map((s) => s.shape[3]);
    for (let i = 0; i < 4; i++) {
      const up = this.ups[i].forward(h);
      h = this.dec[i].forward(concatChannels(up, skips[3 - i]));
    }
    return this.clamp.forward(this.headOut.forward(this.headElu.forward(this.headTime.forward(h))));
  }

  backward(gOut: Nd): void {
    let g = this.headTime.backward(
      this.headElu.backward(this.headOut.backward(this.clamp.backward(gOut))),
    );
    const gSkips: (Nd | null)[] = [null, null, null, null];
    for (let i = 3; i >= 0; i--) {
      const gc = this.dec[i].backward(g);
      const upC = gc.shape[3] - this.skipChannels[3 - i];
      const [gUp, gSkip] = splitChannels(gc, upC);
      gSkips[3 - i] = gSkip;
      g = this.ups[i].backward(gUp);
    }
    g = this.mid.backward(g);
    for (let i = 3; i >= 0; i--) {
      g = this.pools[i].backward(g);
      addInto(g, gSkips[i] as Nd);
      g = this.enc[i].backward(g);
    }
  }

  params(): Param[] {
    const out: Param[] = [];
    for (const b of this.enc) out.push(...b.params());
    out.push(...this.mid.params());
    for (const b of this.dec) out.push(...b.params());
    out.push(...this.headTime.params(), ...this.headOut.params());
    return out;
  }

  zeroGrads(): void {
    for (const p of this.params()) p.grad.data.fill(0);
  }
}
