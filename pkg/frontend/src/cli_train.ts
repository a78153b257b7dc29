/** Minimal training entry point:
 *    node dist/cli_train.js --data <dataset dir> --out <output dir>
 *         [--epochs N] [--lr X] [--crop N] [--seed N] [--widths 8,16,32,64]
 *
 * Writes train_metrics.csv, checkpoint.{json,bin} and params_pred.{raw,json}
 * into the output directory.
 */

import { parseArgs } from "node:util";

import { defaultNetworkConfig } from "./unet.js";
import { defaultTrainConfig, loadDataset, train } from "./train.js";

const { values } = parseArgs({
  options: {
    data: { type: "string" },
    out: { type: "string" },
    epochs: { type: "string", default: "500" },
    lr: { type: "string", default: "1e-4" },
    crop: { type: "string", default: "112" },
    seed: { type: "string", default: "0" },
    widths: { type: "string", default: "16,32,64,128" },
    "fine-step-s": { type: "string", default: "1.0" },
  },
});

if (!values.data || !values.out) {
  console.error("usage: cli_train --data <dataset dir> --out <output dir> [options]");
  process.exit(2);
}

const widths = values.widths!.split(",").map(Number);
if (widths.length !== 4 || widths.some((w) => !Number.isInteger(w) || w < 1)) {
  console.error(`bad --widths ${values.widths}`);
  process.exit(2);
}

try {
  const dataset = loadDataset(values.data);
  const net = defaultNetworkConfig({
    widths: widths as [number, number, number, number],
    seed: Number(values.seed),
  });
  const cfg = defaultTrainConfig({
    initialLr: Number(values.lr),
    maxEpochs: Number(values.epochs),
    cropSize: Number(values.crop),
    seed: Number(values.seed),
    fineStepS: Number(values["fine-step-s"]),
    verbose: true,
  });
  const result = train(dataset, net, cfg, values.out);
  const s = result.finalScores;
  console.log(
    `done: mse ${s.mse.toExponential(3)} mae ${s.mae.toFixed(1)} ` +
      `cs ${s.cosineSimilarity.toFixed(4)} -> ${values.out}`,
  );
} catch (err) {
  console.error(`error: ${(err as Error).message}`);
  process.exit(1);
}
