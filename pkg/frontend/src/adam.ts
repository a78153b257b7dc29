/** Adam with bias correction; learningRate is mutable for schedules. */

import { Param } from "./layers.js";

export class Adam {
  learningRate: number;
  private t = 0;
  private readonly m: Float32Array[];
  private readonly v: Float32Array[];

  constructor(
    readonly parameters: Param[],
    learningRate: number,
    readonly beta1 = 0.9,
    readonly beta2 = 0.999,
    readonly eps = 1e-8,
  ) {
    this.learningRate = learningRate;
    this.m = parameters.map((p) => new Float32Array(p.value.size));
    this.v = parameters.map((p) => new Float32Array(p.value.size));
  }

  /** Apply accumulated gradients and clear them. */
  step(): void {
    this.t++;
    const c1 = 1 - Math.pow(this.beta1, this.t);
    const c2 = 1 - Math.pow(this.beta2, this.t);
    for (let k = 0; k < this.parameters.length; k++) {
      const p = this.parameters[k];
      const m = this.m[k];
      const v = this.v[k];
      const w = p.value.data;
      const g = p.grad.data;
      for (let i = 0; i < w.length; i++) {
        m[i] = this.beta1 * m[i] + (1 - this.beta1) * g[i];
        v[i] = this.beta2 * v[i] + (1 - this.beta2) * g[i] * g[i];
        w[i] -= (this.learningRate * (m[i] / c1)) / (Math.sqrt(v[i] / c2) + this.eps);
      }
      g.fill(0);
    }
  }
}
