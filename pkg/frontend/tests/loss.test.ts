import * as fs from "node:fs";
import * as path from "node:path";
import { describe, expect, it } from "vitest";

import { ForwardOperator } from "../src/forward.js";
import { TacReconstructionLoss } from "../src/loss.js";
import { maskedTacScores } from "../src/metrics.js";
import { Nd } from "../src/nd.js";
import { Rng } from "../src/rng.js";
import { idifFromCsv } from "../src/schedule.js";
import { loadDataset } from "../src/train.js";
import { readVolume } from "../src/dataio.js";

const FIX = path.join(__dirname, "..", "fixtures");

function fixtureRows() {
  const lines = fs
    .readFileSync(path.join(FIX, "forward_fixtures.csv"), "utf-8")
    .split(/\r?\n/)
    .filter((l) => l.trim().length > 0)
    .slice(1)
    .map((l) => l.split(",").map(Number));
  return lines.map((v) => ({ params: v.slice(0, 4), tac: v.slice(4) }));
}

function makeOp() {
  const { curve, schedule } = idifFromCsv(
    fs.readFileSync(path.join(FIX, "idif.csv"), "utf-8"),
  );
  return new ForwardOperator(curve, schedule, 1.0);
}

describe("self-supervised TAC reconstruction loss", () => {
  it("is ~0 at the ground-truth parameters on noiseless data", () => {
    const ds = loadDataset(path.join(FIX, "ds_clean"));
    const truth = readVolume(path.join(FIX, "ds_clean", "truth"));
    if (truth.kind !== "parametric") throw new Error("bad truth file");
    const op = new ForwardOperator(ds.curve, ds.schedule, 1.0);
    const loss = new TacReconstructionLoss(op);
    const [, z, y, x] = truth.dims;
    const plane = y * x;
    const s = ds.slices[3];
    const params = Nd.zeros([1, y, x, 4]);
    for (let p = 0; p < plane; p++) {
      for (let c = 0; c < 4; c++) {
        params.data[p * 4 + c] = truth.data[(c * z + s.z) * plane + p];
      }
    }
    const value = loss.value(params, s.measured, s.maskIdx);
    // normalize by the mean squared measured activity
    let norm = 0;
    let n = 0;
    for (const vox of s.maskIdx) {
      for (let i = 0; i < op.nFrames; i++) {
        norm += s.measured[vox * op.nFrames + i] ** 2;
        n++;
      }
    }
    expect(value / (norm / n)).toBeLessThan(1e-8);
  });

  it("agrees with the independently exported model curves (cross-check)", () => {
    // loss(params_j, measured = reference tac_i) must equal the MSE between
    // the two reference curves, since our forward model must reproduce tac_j
    const op = makeOp();
    const loss = new TacReconstructionLoss(op);
    const rows = fixtureRows();
    const [i, j] = [0, 5];
    const params = Nd.zeros([1, 1, 1, 4]);
    params.data.set(rows[j].params);
    const measured = Float64Array.from(rows[i].tac);
    const got = loss.value(params, measured, Int32Array.from([0]));
    let want = 0;
    for (let k = 0; k < op.nFrames; k++) {
      want += (rows[j].tac[k] - rows[i].tac[k]) ** 2;
    }
    want /= op.nFrames;
    expect(Math.abs(got - want) / want).toBeLessThan(1e-5);
  });

  it("matches the masked score computation", () => {
    const op = makeOp();
    const loss = new TacReconstructionLoss(op);
    const rows = fixtureRows();
    const params = Nd.zeros([1, 1, 2, 4]);
    params.data.set([...rows[2].params, ...rows[3].params]);
    const measured = Float64Array.from([...rows[0].tac, ...rows[1].tac]);
    const mask = Int32Array.from([0, 1]);
    const fromLoss = loss.value(params, measured, mask);
    const fromScores = maskedTacScores(op, params, measured, mask).mse;
    expect(Math.abs(fromLoss - fromScores) / fromScores).toBeLessThan(1e-12);
  });

  it("gradients match central finite differences at interior points", () => {
    const op = makeOp();
    const loss = new TacReconstructionLoss(op);
    const rows = fixtureRows();
    const rng = new Rng(6);
    const nVox = 3;
    const params = Nd.zeros([1, 1, nVox, 4]);
    const measured = new Float64Array(nVox * op.nFrames);
    for (let v = 0; v < nVox; v++) {
      // interior parameter draws, away from the clamp boundaries
      params.data[v * 4] = 0.1 + 1.5 * rng.next();
      params.data[v * 4 + 1] = 0.1 + 2.0 * rng.next();
      params.data[v * 4 + 2] = 0.05 + 0.8 * rng.next();
      params.data[v * 4 + 3] = 0.05 + 0.8 * rng.next();
      measured.set(rows[v + 4].tac, v * op.nFrames);
    }
    const mask = Int32Array.from([0, 1, 2]);
    const { loss: l0, grad } = loss.valueAndGrad(params, measured, mask);
    expect(Number.isFinite(l0)).toBe(true);
    let worst = 0;
    for (let v = 0; v < nVox; v++) {
      for (let c = 0; c < 4; c++) {
        const i = v * 4 + c;
        const h = 1e-5 * Math.max(1, Math.abs(params.data[i]));
        const keep = params.data[i];
        // float32 storage cannot hold keep +/- h exactly; read back the
        // values actually used so the FD step is exact
        params.data[i] = keep + h;
        const hi = params.data[i];
        const fp = loss.value(params, measured, mask);
        params.data[i] = keep - h;
        const lo = params.data[i];
        const fm = loss.value(params, measured, mask);
        params.data[i] = keep;
        const fd = (fp - fm) / (hi - lo);
        worst = Math.max(worst, Math.abs(fd - grad.data[i]) / Math.max(1e-12, Math.abs(fd)));
      }
    }
    expect(worst).toBeLessThan(1e-3);
  });

  it("rejects an empty mask", () => {
    const op = makeOp();
    const loss = new TacReconstructionLoss(op);
    expect(() => loss.value(Nd.zeros([1, 1, 1, 4]), new Float64Array(62), Int32Array.from([])))
      .toThrow(/masked voxel/);
  });
});
