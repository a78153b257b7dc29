/** Curve agreement scores between measured TACs and curves reconstructed
 * from a parameter map, plus the CSV writer matching the evaluation schema
 * `index,mse,mae,cosine_similarity`. */

import * as fs from "node:fs";

import { ForwardOperator } from "./forward.js";
import { Nd } from "./nd.js";

export interface TacScores {
  mse: number;
  mae: number;
  cosineSimilarity: number;
}

/** Mean voxel-wise scores over the masked voxels of one [1, Y, X, 4] map. */
export function maskedTacScores(
  op: ForwardOperator,
  params: Nd,
  measured: Float64Array,
  maskIdx: Int32Array,
): TacScores {
  const nT = op.nFrames;
  const tac = new Float64Array(nT);
  let mse = 0;
  let mae = 0;
  let cs = 0;
  let csCount = 0;
  for (let m = 0; m < maskIdx.length; m++) {
    const vox = maskIdx[m];
    const o = vox * 4;
    op.tacInto(params.data[o], params.data[o + 1], params.data[o + 2], params.data[o + 3], tac);
    let sse = 0;
    let sab = 0;
    let dot = 0;
    let nx = 0;
    let ny = 0;
    const yOff = vox * nT;
    for (let i = 0; i < nT; i++) {
      const a = measured[yOff + i];
      const b = tac[i];
      const r = b - a;
      sse += r * r;
      sab += Math.abs(r);
      dot += a * b;
      nx += a * a;
      ny += b * b;
    }
    mse += sse / nT;
    mae += sab / nT;
    if (nx > 0 && ny > 0) {
      cs += Math.min(1, Math.max(-1, dot / Math.sqrt(nx * ny)));
      csCount++;
    }
  }
  const n = maskIdx.length;
  return {
    mse: mse / n,
    mae: mae / n,
    cosineSimilarity: csCount ? cs / csCount : NaN,
  };
}

export function writeMetricsCsv(
  path: string,
  rows: { index: number | string; scores: TacScores }[],
): void {
  const lines = ["index,mse,mae,cosine_similarity"];
  for (const r of rows) {
    lines.push(`${r.index},${r.scores.mse},${r.scores.mae},${r.scores.cosineSimilarity}`);
  }
  fs.writeFileSync(path, lines.join("\n") + "\n");
}
