/**
 * Typed Node client for the `calref` CLI.
 *
 * Training loops call into it with in-memory probability matrices; the client
 * round-trips them through the CLI's prediction-file CSV and calibrator JSON
 * formats, so results are identical to driving the CLI by hand.
 */

import { execFile } from 'node:child_process';
import { promises as fs } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { promisify } from 'node:util';

const run = promisify(execFile);

export type Loss = 'logloss' | 'brier';
export type DecomposeMethod = 'ts' | 'isotonic' | 'bruteforce' | 'cv-ts';
export type StoppingMetric =
  | 'logloss'
  | 'brier'
  | 'neg-accuracy'
  | 'neg-auroc'
  | 'ts-refinement-logloss'
  | 'ts-refinement-brier'
  | 'cv-ts-refinement-logloss';

export interface PredictionData {
  /** n x k probability rows (each row sums to 1) */
  probs: number[][];
  /** n class indices in 0..k-1 */
  labels: number[];
}

export interface Decomposition {
  risk: number;
  calibration: number;
  refinement: number;
  loss: Loss;
  estimator: string;
  n: number;
  k: number;
}

export interface TemperatureCalibrator {
  type: 'temperature';
  beta: number;
  smoothing_n: number;
}

export interface IsotonicCalibrator {
  type: 'isotonic';
  breakpoints: number[];
  values: number[];
  smoothing_n: number;
}

export type Calibrator = TemperatureCalibrator | IsotonicCalibrator;

export interface StopReport {
  bestEpochs: Record<StoppingMetric, number>;
  bestValues: Record<StoppingMetric, number>;
}

export interface ClientOptions {
  /** CLI executable, default "calref" (override with e.g. an absolute path) */
  command?: string;
}

export class CliError extends Error {
  constructor(
    message: string,
    public readonly exitCode: number | null,
    public readonly stderr: string,
  ) {
    super(message);
    this.name = 'CliError';
  }
}

function toCsv(data: PredictionData): string {
  const { probs, labels } = data;
  if (probs.length !== labels.length) {
    throw new Error(`probs rows (${probs.length}) != labels (${labels.length})`);
  }
  const k = probs[0]?.length ?? 0;
  if (k < 2) throw new Error('need at least two classes');
  const header = ['label', ...Array.from({ length: k }, (_, i) => `p${i}`)];
  const lines = [header.join(',')];
  for (let i = 0; i < probs.length; i++) {
    // JS shortest-round-trip formatting re-parses to the identical double
    lines.push([labels[i], ...probs[i].map((v) => String(v))].join(','));
  }
  return lines.join('\n') + '\n';
}

function fromCsv(text: string): PredictionData {
  const rows = text.trim().split(/\r?\n/);
  const header = rows[0].split(',');
  const labelIdx = header.indexOf('label');
  const probIdx = header
    .map((name, idx) => ({ name, idx }))
    .filter(({ name }) => /^p\d+$/.test(name))
    .map(({ idx }) => idx);
  const probs: number[][] = [];
  const labels: number[] = [];
  for (const row of rows.slice(1)) {
    const fields = row.split(',');
    labels.push(Number(fields[labelIdx]));
    probs.push(probIdx.map((idx) => Number(fields[idx])));
  }
  return { probs, labels };
}

export class CalrefClient {
  private readonly command: string;

  constructor(options: ClientOptions = {}) {
    this.command = options.command ?? process.env.CALREF_BIN ?? 'calref';
  }

  private async exec(args: string[]): Promise<string> {
    try {
      const { stdout } = await run(this.command, args, { maxBuffer: 64 * 1024 * 1024 });
      return stdout;
    } catch (err) {
      const e = err as { code?: number; stderr?: string; message?: string };
      throw new CliError(
        `calref ${args[0]} failed: ${e.stderr?.trim() || e.message}`,
        typeof e.code === 'number' ? e.code : null,
        e.stderr ?? '',
      );
    }
  }

  private async withWorkdir<T>(body: (dir: string) => Promise<T>): Promise<T> {
    const dir = await fs.mkdtemp(join(tmpdir(), 'calref-'));
    try {
      return await body(dir);
    } finally {
      await fs.rm(dir, { recursive: true, force: true });
    }
  }

  /** Risk = calibration + refinement for the chosen estimator class. */
  async decompose(
    data: PredictionData,
    options: { loss?: Loss; method?: DecomposeMethod; smoothing?: boolean } = {},
  ): Promise<Decomposition> {
    return this.withWorkdir(async (dir) => {
      const preds = join(dir, 'preds.csv');
      await fs.writeFile(preds, toCsv(data));
      const out = await this.exec([
        'decompose',
        '--preds', preds,
        '--loss', options.loss ?? 'logloss',
        '--method', options.method ?? 'ts',
        '--smoothing', options.smoothing ? 'on' : 'off',
        '--format', 'json',
      ]);
      return JSON.parse(out) as Decomposition;
    });
  }

  /** Fit a post-hoc calibrator (temperature scaling or binary isotonic). */
  async fitCalibrator(
    data: PredictionData,
    options: { method?: 'ts' | 'isotonic'; loss?: Loss; smoothing?: boolean } = {},
  ): Promise<Calibrator> {
    return this.withWorkdir(async (dir) => {
      const preds = join(dir, 'preds.csv');
      const out = join(dir, 'calibrator.json');
      await fs.writeFile(preds, toCsv(data));
      await this.exec([
        'calibrate', 'fit',
        '--preds', preds,
        '--out', out,
        '--method', options.method ?? 'ts',
        '--loss', options.loss ?? 'logloss',
        '--smoothing', options.smoothing ? 'on' : 'off',
      ]);
      return JSON.parse(await fs.readFile(out, 'utf8')) as Calibrator;
    });
  }

  /** Apply a fitted calibrator to predictions. */
  async applyCalibrator(data: PredictionData, calibrator: Calibrator): Promise<PredictionData> {
    return this.withWorkdir(async (dir) => {
      const preds = join(dir, 'preds.csv');
      const calPath = join(dir, 'calibrator.json');
      const out = join(dir, 'calibrated.csv');
      await fs.writeFile(preds, toCsv(data));
      await fs.writeFile(calPath, JSON.stringify(calibrator));
      await this.exec([
        'calibrate', 'apply',
        '--preds', preds,
        '--calibrator', calPath,
        '--out', out,
      ]);
      return fromCsv(await fs.readFile(out, 'utf8'));
    });
  }

  /** Fit temperature scaling and return both the scale and the calibrated rows. */
  async fitApplyTemperature(
    data: PredictionData,
    options: { loss?: Loss; smoothing?: boolean } = {},
  ): Promise<{ beta: number; smoothingN: number; calibrated: PredictionData }> {
    const cal = (await this.fitCalibrator(data, {
      method: 'ts',
      loss: options.loss,
      smoothing: options.smoothing,
    })) as TemperatureCalibrator;
    const calibrated = await this.applyCalibrator(data, cal);
    return { beta: cal.beta, smoothingN: cal.smoothing_n, calibrated };
  }

  /** Best epoch per stopping metric over per-epoch validation predictions. */
  async bestEpochs(
    epochs: PredictionData[],
    options: { smoothing?: boolean } = {},
  ): Promise<StopReport> {
    if (epochs.length === 0) throw new Error('need at least one epoch');
    return this.withWorkdir(async (dir) => {
      const epochDir = join(dir, 'epochs');
      await fs.mkdir(epochDir);
      await Promise.all(
        epochs.map((data, i) =>
          fs.writeFile(join(epochDir, `epoch_${String(i).padStart(4, '0')}.csv`), toCsv(data)),
        ),
      );
      const out = await this.exec([
        'stop',
        '--epoch-dir', epochDir,
        '--report-all',
        '--smoothing', options.smoothing === false ? 'off' : 'on',
      ]);
      const bestEpochs = {} as Record<StoppingMetric, number>;
      const bestValues = {} as Record<StoppingMetric, number>;
      for (const line of out.trim().split(/\r?\n/)) {
        const m = line.match(/^best-epoch (\S+) (\d+) (\S+)$/);
        if (m) {
          bestEpochs[m[1] as StoppingMetric] = Number(m[2]);
          bestValues[m[1] as StoppingMetric] = Number(m[3]);
        }
      }
      return { bestEpochs, bestValues };
    });
  }
}

export default CalrefClient;
