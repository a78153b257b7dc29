/** Training loop: self-supervised parameter-map learning on slice stacks.
 *
 * Datasets are the standard raw+sidecar layout (dynamic volume, label map,
 * IDIF CSV). Each axial slice becomes one sample: the frame stack is
 * normalized by the dataset peak and edge-padded from the acquired frame
 * count to the network's time length; the loss sees only real frames and
 * only labeled voxels. Learning rate follows the halving schedule; a NaN
 * loss aborts with diagnostics; everything is seeded.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { Adam } from "./adam.js";
import { readIdifFile, readVolume, writeParametric, ParametricVolume } from "./dataio.js";
import { ForwardOperator } from "./forward.js";
import { TacReconstructionLoss } from "./loss.js";
import { maskedTacScores, TacScores, writeMetricsCsv } from "./metrics.js";
import { Nd } from "./nd.js";
import { Rng } from "./rng.js";
import { FrameSchedule, InputCurve, idifFromCsv } from "./schedule.js";
import { NetworkConfig, SpatioTemporalUNet, defaultNetworkConfig } from "./unet.js";

export interface SliceSample {
  z: number;
  input: Nd; // [timeLength, Y, X, 1], normalized
  measured: Float64Array; // [Y*X * nFrames], raw Bq/ml
  maskIdx: Int32Array; // labeled voxels, row-major y*X + x
  labels: Uint8Array; // [Y*X]
}

export interface Dataset {
  slices: SliceSample[];
  curve: InputCurve;
  schedule: FrameSchedule;
  inputScale: number;
  legend: Map<number, string>;
  spacingMm: number[];
  dims: [number, number, number]; // Z, Y, X
}

export interface TrainConfig {
  initialLr: number;
  halveEvery: number;
  maxEpochs: number;
  cropSize: number;
  stepsPerEpoch: number;
  seed: number;
  fineStepS: number;
  evalEvery: number;
  targetCs?: number;
  verbose?: boolean;
  onEpoch?: (record: EpochRecord, model: SpatioTemporalUNet) => void;
}

export function defaultTrainConfig(overrides: Partial<TrainConfig> = {}): TrainConfig {
  return {
    initialLr: 1e-4,
    halveEvery: 25,
    maxEpochs: 500,
    cropSize: 112,
    stepsPerEpoch: 0, // 0: one pass over the slices per epoch
    seed: 0,
    fineStepS: 1.0,
    evalEvery: 5,
    verbose: false,
    ...overrides,
  };
}

export function loadDataset(dir: string, timeLength = 64): Dataset {
  const vol = readVolume(path.join(dir, "dynamic"));
  if (vol.kind !== "dynamic") throw new Error("dynamic volume expected");
  const labels = readVolume(path.join(dir, "labels"));
  if (labels.kind !== "labels") throw new Error("label map expected");
  const { curve, schedule } = idifFromCsv(readIdifFile(path.join(dir, "idif.csv")));
  const [t, z, y, x] = vol.dims;
  if (t !== schedule.nFrames) throw new Error("volume frames vs schedule mismatch");
  if (t > timeLength) throw new Error(`cannot pad ${t} frames into ${timeLength}`);

  let peak = 0;
  for (let i = 0; i < vol.data.length; i++) peak = Math.max(peak, vol.data[i]);
  const scale = peak > 0 ? 1.0 / peak : 1.0;

  const slices: SliceSample[] = [];
  const plane = y * x;
  for (let zi = 0; zi < z; zi++) {
    const input = Nd.zeros([timeLength, y, x, 1]);
    const measured = new Float64Array(plane * t);
    for (let ti = 0; ti < timeLength; ti++) {
      const src = Math.min(ti, t - 1); // edge-replicate past the last frame
      const off = (src * z + zi) * plane;
      for (let p = 0; p < plane; p++) {
        const v = vol.data[off + p];
        input.data[ti * plane + p] = v * scale;
        if (ti < t) measured[p * t + ti] = v;
      }
    }
    const lab = new Uint8Array(plane);
    const maskList: number[] = [];
    const labOff = zi * plane;
    for (let p = 0; p < plane; p++) {
      lab[p] = labels.data[labOff + p];
      if (lab[p] !== 0) maskList.push(p);
    }
    slices.push({ z: zi, input, measured, maskIdx: Int32Array.from(maskList), labels: lab });
  }
  return {
    slices,
    curve,
    schedule,
    inputScale: scale,
    legend: labels.legend,
    spacingMm: labels.spacingMm,
    dims: [z, y, x],
  };
}

function cropSample(
  s: SliceSample,
  nFrames: number,
  y0: number,
  x0: number,
  c: number,
): SliceSample {
  const [tLen, , x] = s.input.shape;
  const input = Nd.zeros([tLen, c, c, 1]);
  for (let t = 0; t < tLen; t++) {
    for (let yy = 0; yy < c; yy++) {
      const srcOff = (t * s.input.shape[1] + (y0 + yy)) * x + x0;
      input.data.set(s.input.data.subarray(srcOff, srcOff + c), (t * c + yy) * c);
    }
  }
  const measured = new Float64Array(c * c * nFrames);
  const lab = new Uint8Array(c * c);
  const maskList: number[] = [];
  for (let yy = 0; yy < c; yy++) {
    for (let xx = 0; xx < c; xx++) {
      const src = (y0 + yy) * x + (x0 + xx);
      const dst = yy * c + xx;
      measured.set(s.measured.subarray(src * nFrames, (src + 1) * nFrames), dst * nFrames);
      lab[dst] = s.labels[src];
      if (lab[dst] !== 0) maskList.push(dst);
    }
  }
  return { z: s.z, input, measured, maskIdx: Int32Array.from(maskList), labels: lab };
}

export interface EpochRecord {
  epoch: number;
  lr: number;
  meanLoss: number;
  scores?: TacScores;
}

export interface TrainResult {
  model: SpatioTemporalUNet;
  history: EpochRecord[];
  finalScores: TacScores;
}

export function evaluate(
  model: SpatioTemporalUNet,
  dataset: Dataset,
  op: ForwardOperator,
): TacScores {
  let mse = 0;
  let mae = 0;
  let cs = 0;
  let n = 0;
  for (const s of dataset.slices) {
    if (s.maskIdx.length === 0) continue;
    const pred = model.forward(s.input);
    const sc = maskedTacScores(op, pred, s.measured, s.maskIdx);
    const w = s.maskIdx.length;
    mse += sc.mse * w;
    mae += sc.mae * w;
    cs += sc.cosineSimilarity * w;
    n += w;
  }
  return { mse: mse / n, mae: mae / n, cosineSimilarity: cs / n };
}

export function train(
  dataset: Dataset,
  netConfig: NetworkConfig = defaultNetworkConfig(),
  config: TrainConfig = defaultTrainConfig(),
  outDir?: string,
): TrainResult {
  const model = new SpatioTemporalUNet({ ...netConfig, seed: config.seed });
  const adam = new Adam(model.params(), config.initialLr);
  const lossOp = new ForwardOperator(dataset.curve, dataset.schedule, config.fineStepS);
  const loss = new TacReconstructionLoss(lossOp);
  const rng = new Rng(config.seed + 0x5eed);
  const nFrames = dataset.schedule.nFrames;
  const [, ySize, xSize] = dataset.dims;
  const crop = Math.max(16, Math.min(config.cropSize, ySize, xSize) & ~15);
  const steps = config.stepsPerEpoch > 0 ? config.stepsPerEpoch : dataset.slices.length;
  const usable = dataset.slices.filter((s) => s.maskIdx.length > 0);
  if (usable.length === 0) throw new Error("no labeled voxels anywhere");

  const history: EpochRecord[] = [];
  for (let epoch = 0; epoch < config.maxEpochs; epoch++) {
    adam.learningRate = config.initialLr * Math.pow(0.5, Math.floor(epoch / config.halveEvery));
    let epochLoss = 0;
    for (let step = 0; step < steps; step++) {
      let sample = usable[rng.int(usable.length)];
      if (crop < ySize || crop < xSize) {
        let tries = 0;
        let cropped: SliceSample;
        do {
          const y0 = rng.int(ySize - crop + 1);
          const x0 = rng.int(xSize - crop + 1);
          cropped = cropSample(sample, nFrames, y0, x0, crop);
        } while (cropped.maskIdx.length === 0 && ++tries < 20);
        if (cropped.maskIdx.length === 0) continue;
        sample = cropped;
      }
      const pred = model.forward(sample.input);
      const { loss: l, grad } = loss.valueAndGrad(pred, sample.measured, sample.maskIdx);
      if (!Number.isFinite(l)) {
        throw new Error(
          `loss diverged (${l}) at epoch ${epoch}, step ${step}, slice z=${sample.z}`,
        );
      }
      epochLoss += l;
      model.backward(grad);
      adam.step();
    }
    const rec: EpochRecord = { epoch, lr: adam.learningRate, meanLoss: epochLoss / steps };
    const doEval = epoch % config.evalEvery === 0 || epoch === config.maxEpochs - 1;
    if (doEval) rec.scores = evaluate(model, dataset, lossOp);
    history.push(rec);
    if (config.verbose) {
      const cs = rec.scores ? rec.scores.cosineSimilarity.toFixed(4) : "-";
      console.log(`epoch ${epoch}: lr ${rec.lr.toExponential(1)} ` +
        `loss ${rec.meanLoss.toExponential(3)} cs ${cs}`);
    }
    config.onEpoch?.(rec, model);
    if (config.targetCs != null && rec.scores &&
        rec.scores.cosineSimilarity >= config.targetCs) break;
  }
  const finalScores = history[history.length - 1].scores ?? evaluate(model, dataset, lossOp);

  if (outDir) {
    fs.mkdirSync(outDir, { recursive: true });
    writeMetricsCsv(
      path.join(outDir, "train_metrics.csv"),
      history.filter((h) => h.scores).map((h) => ({ index: h.epoch, scores: h.scores! })),
    );
    saveCheckpoint(path.join(outDir, "checkpoint"), model);
    writeParametric(path.join(outDir, "params_pred"), predictParametric(model, dataset));
  }
  return { model, history, finalScores };
}

/** Full-volume inference: one forward pass per slice. */
export function predictParametric(
  model: SpatioTemporalUNet,
  dataset: Dataset,
): ParametricVolume {
  const [z, y, x] = dataset.dims;
  const data = new Float32Array(4 * z * y * x);
  const plane = y * x;
  for (const s of dataset.slices) {
    const pred = model.forward(s.input); // [1, y, x, 4]
    for (let p = 0; p < plane; p++) {
      for (let c = 0; c < 4; c++) data[(c * z + s.z) * plane + p] = pred.data[p * 4 + c];
    }
  }
  return {
    kind: "parametric",
    dims: [4, z, y, x],
    data,
    channels: ["k1", "k2", "k3", "vb"],
    spacingMm: dataset.spacingMm,
  };
}

/** Per-organ means of each predicted channel over the labeled voxels. */
export function organParamMeans(
  model: SpatioTemporalUNet,
  dataset: Dataset,
): Map<number, [number, number, number, number]> {
  const sums = new Map<number, Float64Array>();
  const counts = new Map<number, number>();
  for (const s of dataset.slices) {
    const pred = model.forward(s.input);
    for (const p of s.maskIdx) {
      const lab = s.labels[p];
      if (!sums.has(lab)) {
        sums.set(lab, new Float64Array(4));
        counts.set(lab, 0);
      }
      const acc = sums.get(lab)!;
      for (let c = 0; c < 4; c++) acc[c] += pred.data[p * 4 + c];
      counts.set(lab, counts.get(lab)! + 1);
    }
  }
  const out = new Map<number, [number, number, number, number]>();
  for (const [lab, acc] of sums) {
    const n = counts.get(lab)!;
    out.set(lab, [acc[0] / n, acc[1] / n, acc[2] / n, acc[3] / n]);
  }
  return out;
}

/** Checkpoints: a JSON manifest plus one little-endian float32 blob. */
export function saveCheckpoint(base: string, model: SpatioTemporalUNet): void {
  const params = model.params();
  let total = 0;
  const entries = params.map((p) => {
    const e = { name: p.name, shape: p.value.shape, offset: total };
    total += p.value.size;
    return e;
  });
  const blob = new Float32Array(total);
  for (let i = 0; i < params.length; i++) blob.set(params[i].value.data, entries[i].offset);
  fs.writeFileSync(
    base + ".json",
    JSON.stringify({ format: "petkin-trainer-checkpoint", version: 1,
                     config: model.config, entries }, null, 2) + "\n",
  );
  fs.writeFileSync(base + ".bin", Buffer.from(blob.buffer));
}

export function loadCheckpoint(base: string): SpatioTemporalUNet {
  const meta = JSON.parse(fs.readFileSync(base + ".json", "utf-8"));
  if (meta.format !== "petkin-trainer-checkpoint") throw new Error("not a checkpoint");
  const buf = fs.readFileSync(base + ".bin");
  const blob = new Float32Array(buf.buffer, buf.byteOffset, buf.byteLength / 4);
  const model = new SpatioTemporalUNet(meta.config as NetworkConfig);
  const byName = new Map(model.params().map((p) => [p.name, p]));
  for (const e of meta.entries) {
    const p = byName.get(e.name);
    if (!p) throw new Error(`checkpoint names unknown parameter ${e.name}`);
    p.value.data.set(blob.subarray(e.offset, e.offset + p.value.size));
  }
  return model;
}
