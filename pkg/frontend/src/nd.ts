/** Flat float32 tensors in [T, Y, X, C] layout (channels innermost). */
import { Rng } from "./rng.js";

export class Nd {
  constructor(
    readonly data: Float32Array,
    readonly shape: readonly number[],
  ) {
    const n = shape.reduce((a, b) => a * b, 1);
    if (n !== data.length) {
      throw new Error(`shape ${shape} does not match length ${data.length}`);
    }
  }

  static zeros(shape: readonly number[]): Nd {
    return new Nd(new Float32Array(shape.reduce((a, b) => a * b, 1)), shape);
  }

  static full(shape: readonly number[], value: number): Nd {
    const out = Nd.zeros(shape);
    out.data.fill(value);
    return out;
  }

  /** He-style gaussian init scaled by the receptive-field fan-in. */
  static randn(shape: readonly number[], std: number, rng: Rng): Nd {
    const out = Nd.zeros(shape);
    for (let i = 0; i < out.data.length; i++) out.data[i] = std * rng.normal();
    return out;
  }

  get size(): number {
    return this.data.length;
  }

  clone(): Nd {
    return new Nd(this.data.slice(), this.shape);
  }
}
