/**
 * Bindings to the scanwalk episodic environment.
 *
 * The class spawns the native environment server (`python -m
 * scanwalk.envrpc serve`) and talks newline-delimited JSON over its
 * stdin/stdout. Every decision happens on the native side; this layer
 * only converts types, so trajectories are identical to native runs for
 * the same scene, start, and action sequence.
 */

import { ChildProcessByStdio, spawn } from "child_process";
import * as readline from "readline";
import type { Readable, Writable } from "stream";

/** Action encoding shared with the native side. */
export enum Action {
  Forward = 0,
  Backward = 1,
  Left = 2,
  Right = 3,
  RotateCw = 4,
  RotateCcw = 5,
}

export const ACTION_NAMES = [
  "forward",
  "backward",
  "left",
  "right",
  "rotate_cw",
  "rotate_ccw",
] as const;

export interface RgbImage {
  /** [height, width, 3] */
  shape: number[];
  /** Row-major uint8 pixels. */
  data: Uint8Array;
}

export interface Observation {
  frameId: string;
  /** [xmin, ymin, xmax, ymax] in pixels, or null when the target is not visible. */
  box: [number, number, number, number] | null;
  rgb?: RgbImage;
}

export interface EpisodeInfo {
  t: number;
  reason: string | null;
  top1: string | null;
  score: number;
  [key: string]: unknown;
}

export interface ResetResult {
  observation: Observation;
  done: boolean;
  info: EpisodeInfo & { done: boolean; reward: number };
}

export interface StepResult {
  observation: Observation;
  reward: number;
  done: boolean;
  info: EpisodeInfo;
}

export interface SceneMeta {
  instances: string[];
  frames: string[];
  actions: string[];
  annotatedStarts: Record<string, string[]>;
}

export interface EnvOptions {
  /** Scene directory in the canonical on-disk layout. */
  scene: string;
  /** Classifier checkpoint path; omit for a reward-free navigation env. */
  classifier?: string;
  maxSteps?: number;
  confidenceThreshold?: number;
  blockedAction?: "stay" | "terminate";
  /** Skip pixel payloads for faster trace-only use. */
  includeRgb?: boolean;
  pythonBin?: string;
}

/** Error carrying the native error text and exception kind. */
export class NativeEnvError extends Error {
  constructor(message: string, public readonly kind: string) {
    super(message);
    this.name = "NativeEnvError";
  }
}

interface RawReply {
  ok: boolean;
  kind?: string;
  error?: string;
  [key: string]: unknown;
}

export class ScanwalkEnv {
  private proc: ChildProcessByStdio<Writable, Readable, null>;
  private lines: AsyncIterator<string>;
  private queue: Promise<unknown> = Promise.resolve();
  private closed = false;

  constructor(options: EnvOptions) {
    const args = [
      "-m",
      "scanwalk.envrpc",
      "serve",
      "--scene",
      options.scene,
      "--T",
      String(options.maxSteps ?? 5),
      "--conf",
      String(options.confidenceThreshold ?? 0.9),
      "--blocked",
      options.blockedAction ?? "stay",
    ];
    if (options.classifier) {
      args.push("--classifier", options.classifier);
    }
    if (!(options.includeRgb ?? true)) {
      args.push("--no-rgb");
    }
    this.proc = spawn(options.pythonBin ?? "python3", args, {
      stdio: ["pipe", "pipe", "inherit"],
    });
    const rl = readline.createInterface({ input: this.proc.stdout });
    this.lines = rl[Symbol.asyncIterator]();
  }

  private call(request: Record<string, unknown>): Promise<RawReply> {
    const run = async (): Promise<RawReply> => {
      if (this.closed) {
        throw new NativeEnvError("environment is closed", "ClosedError");
      }
      this.proc.stdin.write(JSON.stringify(request) + "\n");
      const next = await this.lines.next();
      if (next.done) {
        throw new NativeEnvError("environment process ended unexpectedly", "ProcessExit");
      }
      const reply = JSON.parse(next.value) as RawReply;
      if (!reply.ok) {
        throw new NativeEnvError(reply.error ?? "unknown native error", reply.kind ?? "Error");
      }
      return reply;
    };
    const result = this.queue.then(run, run);
    this.queue = result.catch(() => undefined); // keep the pipeline alive after errors
    return result;
  }

  private decodeObservation(raw: Record<string, unknown>): Observation {
    const obs: Observation = {
      frameId: raw["frame_id"] as string,
      box: (raw["box"] as Observation["box"]) ?? null,
    };
    const rgb = raw["rgb"] as { shape: number[]; b64: string } | undefined;
    if (rgb) {
      obs.rgb = { shape: rgb.shape, data: Uint8Array.from(Buffer.from(rgb.b64, "base64")) };
    }
    return obs;
  }

  async meta(): Promise<SceneMeta> {
    const reply = await this.call({ op: "meta" });
    return {
      instances: reply["instances"] as string[],
      frames: reply["frames"] as string[],
      actions: reply["actions"] as string[],
      annotatedStarts: reply["annotated_starts"] as Record<string, string[]>,
    };
  }

  async reset(
    instanceId: string,
    options: { startFrame?: string; seed?: number } = {}
  ): Promise<ResetResult> {
    const reply = await this.call({
      op: "reset",
      instance_id: instanceId,
      start_frame: options.startFrame ?? null,
      seed: options.seed ?? null,
    });
    const info = reply["info"] as ResetResult["info"];
    return {
      observation: this.decodeObservation(reply["observation"] as Record<string, unknown>),
      done: info.done,
      info,
    };
  }

  async step(action: Action | number): Promise<StepResult> {
    const reply = await this.call({ op: "step", action });
    return {
      observation: this.decodeObservation(reply["observation"] as Record<string, unknown>),
      reward: reply["reward"] as number,
      done: reply["done"] as boolean,
      info: reply["info"] as EpisodeInfo,
    };
  }

  async close(): Promise<void> {
    if (this.closed) {
      return;
    }
    try {
      await this.call({ op: "close" });
    } catch {
      // the process may already be gone; killing below is enough
    }
    this.closed = true;
    this.proc.stdin.end();
    this.proc.kill();
  }
}
