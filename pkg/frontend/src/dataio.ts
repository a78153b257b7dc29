/** Raw + JSON-sidecar dataset files (same layout the toolkit CLI writes).
 *
 * `<base>.raw` is a little-endian C-order array; `<base>.json` declares
 * magic, format_version, kind (dynamic [T,Z,Y,X] float32 / labels [Z,Y,X]
 * uint8 / parametric [C,Z,Y,X] float32), dims, spacing and, per kind, the
 * frame schedule, label legend or channel names.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { FrameSchedule } from "./schedule.js";

const MAGIC = "petkin-volume";
const FORMAT_VERSION = "1.0";

export interface DynamicVolume {
  kind: "dynamic";
  dims: [number, number, number, number]; // T, Z, Y, X
  data: Float32Array;
  schedule: FrameSchedule;
  spacingMm: number[];
}

export interface LabelMap {
  kind: "labels";
  dims: [number, number, number]; // Z, Y, X
  data: Uint8Array;
  legend: Map<number, string>;
  spacingMm: number[];
}

export interface ParametricVolume {
  kind: "parametric";
  dims: [number, number, number, number]; // C, Z, Y, X
  data: Float32Array;
  channels: string[];
  spacingMm: number[];
}

function base(p: string): string {
  return p.endsWith(".raw") ? p.slice(0, -4) : p;
}

function readPayload(rawPath: string, bytesExpected: number): Buffer {
  const buf = fs.readFileSync(rawPath);
  if (buf.length !== bytesExpected) {
    throw new Error(
      `${rawPath}: expected ${bytesExpected} bytes, found ${buf.length}`,
    );
  }
  return buf;
}

export function readVolume(p: string): DynamicVolume | LabelMap | ParametricVolume {
  const b = base(p);
  const meta = JSON.parse(fs.readFileSync(b + ".json", "utf-8"));
  if (meta.magic !== MAGIC) throw new Error(`${b}.json: bad magic ${meta.magic}`);
  const major = String(meta.format_version).split(".")[0];
  if (major !== FORMAT_VERSION.split(".")[0]) {
    throw new Error(`${b}.json: incompatible format version ${meta.format_version}`);
  }
  const dims: number[] = meta.dims.map((d: unknown) => Number(d));
  const count = dims.reduce((a, v) => a * v, 1);
  const spacing: number[] = meta.spacing_mm.map((v: unknown) => Number(v));

  if (meta.kind === "dynamic") {
    if (meta.dtype !== "<f4") throw new Error(`dynamic volume dtype ${meta.dtype} unsupported`);
    const buf = readPayload(b + ".raw", count * 4);
    const data = new Float32Array(buf.buffer, buf.byteOffset, count);
    const fs_ = meta.frame_schedule;
    const schedule = new FrameSchedule(fs_.starts_s, fs_.durations_s);
    if (schedule.nFrames !== dims[0]) {
      throw new Error(`${b}.json: ${dims[0]} frames in dims vs ${schedule.nFrames} in schedule`);
    }
    return { kind: "dynamic", dims: dims as DynamicVolume["dims"], data: data.slice(), schedule, spacingMm: spacing };
  }
  if (meta.kind === "labels") {
    if (meta.dtype !== "|u1") throw new Error(`label map dtype ${meta.dtype} unsupported`);
    const buf = readPayload(b + ".raw", count);
    const legend = new Map<number, string>();
    for (const [k, v] of Object.entries(meta.legend ?? {})) legend.set(Number(k), String(v));
    return { kind: "labels", dims: dims as LabelMap["dims"], data: new Uint8Array(buf.buffer, buf.byteOffset, count).slice(), legend, spacingMm: spacing };
  }
  if (meta.kind === "parametric") {
    if (meta.dtype !== "<f4") throw new Error(`parametric dtype ${meta.dtype} unsupported`);
    const buf = readPayload(b + ".raw", count * 4);
    return {
      kind: "parametric",
      dims: dims as ParametricVolume["dims"],
      data: new Float32Array(buf.buffer, buf.byteOffset, count).slice(),
      channels: (meta.channels ?? []).map(String),
      spacingMm: spacing,
    };
  }
  throw new Error(`${b}.json: unknown kind ${meta.kind}`);
}

export function writeParametric(p: string, vol: ParametricVolume): void {
  const b = base(p);
  fs.mkdirSync(path.dirname(b), { recursive: true });
  const meta = {
    magic: MAGIC,
    format_version: FORMAT_VERSION,
    kind: "parametric",
    dtype: "<f4",
    dims: vol.dims,
    spacing_mm: vol.spacingMm,
    channels: vol.channels,
  };
  fs.writeFileSync(b + ".raw", Buffer.from(vol.data.buffer, vol.data.byteOffset, vol.data.byteLength));
  fs.writeFileSync(b + ".json", JSON.stringify(meta, null, 2) + "\n");
}

export function readIdifFile(p: string) {
  return fs.readFileSync(p, "utf-8");
}
