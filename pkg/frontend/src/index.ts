export { ForwardOperator } from "./forward.js";
export { FrameSchedule, idifFromCsv, parseTacCsv } from "./schedule.js";
export type { InputCurve } from "./schedule.js";
export { readVolume, writeParametric } from "./dataio.js";
export type { DynamicVolume, LabelMap, ParametricVolume } from "./dataio.js";
export { Nd } from "./nd.js";
export { Rng } from "./rng.js";
export { TacReconstructionLoss } from "./loss.js";
export { maskedTacScores, writeMetricsCsv } from "./metrics.js";
export type { TacScores } from "./metrics.js";
export {
  CLAMP_HI,
  CLAMP_LO,
  SpatioTemporalUNet,
  defaultNetworkConfig,
} from "./unet.js";
export type { NetworkConfig } from "./unet.js";
export {
  defaultTrainConfig,
  evaluate,
  loadCheckpoint,
  loadDataset,
  organParamMeans,
  predictParametric,
  saveCheckpoint,
  train,
} from "./train.js";
export type { Dataset, SliceSample, TrainConfig, TrainResult } from "./train.js";
