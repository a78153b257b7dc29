/** Acquisition frame schedules and the frame-sampled blood input curve.
 *
 * The CSV format matches the toolkit convention: header
 * `frame_start_s,duration_s,activity_bq_ml`, one contiguous frame per row
 * starting at t = 0; the activity column holds the curve value at the frame
 * mid-time. The curve is treated as piecewise linear between samples, zero
 * before the first one and constant after the last.
 */

export class FrameSchedule {
  readonly starts: Float64Array;
  readonly durations: Float64Array;

  constructor(starts: ArrayLike<number>, durations: ArrayLike<number>) {
    this.starts = Float64Array.from(starts);
    this.durations = Float64Array.from(durations);
    if (this.starts.length !== this.durations.length || this.starts.length === 0) {
      throw new Error("starts/durations must be equal-length and non-empty");
    }
    if (Math.abs(this.starts[0]) > 1e-9) throw new Error("first frame must start at 0");
    for (let i = 0; i < this.starts.length; i++) {
      if (this.durations[i] <= 0) throw new Error(`frame ${i} has duration <= 0`);
      if (i > 0) {
        const gap = this.starts[i] - (this.starts[i - 1] + this.durations[i - 1]);
        if (Math.abs(gap) > 1e-6) throw new Error(`frames ${i - 1}/${i} not contiguous`);
      }
    }
  }

  get nFrames(): number {
    return this.starts.length;
  }

  get endTime(): number {
    return this.starts[this.nFrames - 1] + this.durations[this.nFrames - 1];
  }

  get midTimes(): Float64Array {
    const out = new Float64Array(this.nFrames);
    for (let i = 0; i < this.nFrames; i++) out[i] = this.starts[i] + 0.5 * this.durations[i];
    return out;
  }

  /** Frame edges, length nFrames + 1. */
  get boundaries(): Float64Array {
    const out = new Float64Array(this.nFrames + 1);
    out.set(this.starts);
    out[this.nFrames] = this.endTime;
    return out;
  }
}

export interface InputCurve {
  /** strictly increasing sample times [s] */
  times: Float64Array;
  /** non-negative activity [Bq/ml] */
  values: Float64Array;
}

export function interpCurve(curve: InputCurve, t: number): number {
  const { times, values } = curve;
  const n = times.length;
  if (t < times[0]) return 0.0;
  if (t >= times[n - 1]) return values[n - 1];
  let lo = 0;
  let hi = n - 1;
  while (hi - lo > 1) {
    const mid = (lo + hi) >> 1;
    if (times[mid] <= t) lo = mid;
    else hi = mid;
  }
  const w = (t - times[lo]) / (times[hi] - times[lo]);
  return values[lo] + w * (values[hi] - values[lo]);
}

export function parseTacCsv(text: string): { schedule: FrameSchedule; values: Float64Array } {
  const lines = text.split(/\r?\n/).filter((l) => l.trim().length > 0);
  if (lines.length === 0) throw new Error("empty TAC/IDIF file");
  const header = lines[0].split(",").map((c) => c.trim());
  const expected = ["frame_start_s", "duration_s", "activity_bq_ml"];
  if (header.join() !== expected.join()) {
    throw new Error(`unexpected header [${header}] (want [${expected}])`);
  }
  const starts: number[] = [];
  const durs: number[] = [];
  const vals: number[] = [];
  for (const line of lines.slice(1)) {
    const cells = line.split(",").map(Number);
    if (cells.length !== 3 || cells.some((v) => !Number.isFinite(v))) {
      throw new Error(`bad row: ${line}`);
    }
    starts.push(cells[0]);
    durs.push(cells[1]);
    vals.push(cells[2]);
  }
  if (vals.some((v) => v < 0)) throw new Error("negative activity in curve file");
  const schedule = new FrameSchedule(starts, durs);
  return { schedule, values: Float64Array.from(vals) };
}

/** Input curve from an IDIF CSV: samples live at the frame mid-times. */
export function idifFromCsv(text: string): { curve: InputCurve; schedule: FrameSchedule } {
  const { schedule, values } = parseTacCsv(text);
  return { curve: { times: schedule.midTimes, values }, schedule };
}
