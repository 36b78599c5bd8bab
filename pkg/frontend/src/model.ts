// View-model for the bedside console: session state, action selectors,
// what-if overlays, the step timeline, and the replayable session log.
// Pure logic, no DOM; the UI layer renders whatever lives here.

import {
  Action,
  ModelInfo,
  Recommendations,
  ServiceClient,
  SessionOptions,
  SessionState,
} from "./api.js";

export interface TimelineEntry {
  step: number;
  chosen: Record<string, Action>;
  overridden: string[]; // knobs where the operator rejected the recommendation
  recommendations: Recommendations;
  state: SessionState;
}

export interface WhatIf {
  feature: string;
  value: number;
  recommendations: Recommendations;
}

export class ConsoleSession {
  sessionId: string | null = null;
  options: Required<SessionOptions> = { seed: 0, age_years: 5.0, ecmo_type: "VA", on_ecmo: true };
  info: ModelInfo | null = null;
  state: SessionState | null = null;
  initialState: SessionState | null = null;
  recommendations: Recommendations | null = null;
  selectors: Record<string, Action> = {};
  timeline: TimelineEntry[] = [];
  whatIf: WhatIf | null = null;
  pending = false;

  constructor(private readonly client: ServiceClient) {}

  get knobs(): string[] {
    return this.info ? this.info.knobs.map((k) => k.name) : Object.keys(this.selectors);
  }

  async start(options: SessionOptions = {}): Promise<void> {
    this.options = { ...this.options, ...options };
    this.info = await this.client.modelInfo();
    const res = await this.client.startSession(this.options);
    this.sessionId = res.session_id;
    this.state = res.state;
    this.initialState = res.state;
    this.recommendations = res.recommendations;
    this.timeline = [];
    this.whatIf = null;
    this.resetSelectors();
  }

  private resetSelectors(): void {
    this.selectors = {};
    for (const [knob, rec] of Object.entries(this.recommendations ?? {})) {
      this.selectors[knob] = rec.action;
    }
  }

  choose(knob: string, action: Action): void {
    if (!(knob in this.selectors)) {
      throw new Error(`unknown knob ${knob}`);
    }
    this.selectors[knob] = action;
  }

  async commitStep(): Promise<TimelineEntry> {
    if (!this.sessionId || !this.recommendations) {
      throw new Error("no active session");
    }
    if (this.pending) {
      throw new Error("a step is already in flight");
    }
    this.pending = true;
    try {
      const chosen = { ...this.selectors };
      const overridden = Object.keys(chosen).filter(
        (k) => chosen[k] !== this.recommendations![k].action,
      );
      const res = await this.client.step(this.sessionId, chosen);
      const entry: TimelineEntry = {
        step: res.state.step,
        chosen,
        overridden,
        recommendations: res.recommendations,
        state: res.state,
      };
      this.timeline.push(entry);
      this.state = res.state;
      this.recommendations = res.recommendations;
      this.whatIf = null;
      this.resetSelectors();
      return entry;
    } finally {
      this.pending = false;
    }
  }

  /** Hypothetical exploration: re-predict on an edited copy of the current
   *  committed state without stepping the simulation. Last write wins. */
  async whatIfEdit(feature: string, value: number): Promise<Recommendations> {
    if (!this.state || !this.info) {
      throw new Error("no active session");
    }
    if (!this.info.feature_names.includes(feature)) {
      throw new Error(`unknown feature ${feature}`);
    }
    if (!Number.isFinite(value)) {
      throw new Error("what-if values must be finite numbers");
    }
    const edited = { ...this.state.features, [feature]: value };
    const res = await this.client.predict(edited);
    this.whatIf = { feature, value, recommendations: res.per_knob };
    return res.per_knob;
  }

  revertWhatIf(): void {
    this.whatIf = null;
  }

  /** The recommendations currently on display: hypothetical if a what-if
   *  edit is active, committed otherwise. */
  displayed(): Recommendations | null {
    return this.whatIf ? this.whatIf.recommendations : this.recommendations;
  }
}

// ---------------------------------------------------------------------------
// session log: export and deterministic replay

const META_COLUMNS = ["seed", "age_years", "ecmo_type", "on_ecmo"] as const;

function csvField(value: string): string {
  return /[",\n]/.test(value) ? '"' + value.replace(/"/g, '""') + '"' : value;
}

function csvLine(fields: string[]): string {
  return fields.map(csvField).join(",");
}

function splitCsvLine(line: string): string[] {
  const out: string[] = [];
  let cur = "";
  let quoted = false;
  for (let i = 0; i < line.length; i++) {
    const ch = line[i];
    if (quoted) {
      if (ch === '"' && line[i + 1] === '"') {
        cur += '"';
        i++;
      } else if (ch === '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch === '"') {
      quoted = true;
    } else if (ch === ",") {
      out.push(cur);
      cur = "";
    } else {
      cur += ch;
    }
  }
  out.push(cur);
  return out;
}

export interface SessionLog {
  options: Required<SessionOptions>;
  featureNames: string[];
  knobs: string[];
  rows: Array<{
    step: number;
    chosen: Record<string, Action>;
    overridden: string[];
    features: Record<string, number>;
  }>;
}

/** One row per committed step (step 0 is the initial state with no choices);
 *  float features are serialized with full round-trip precision. */
export function exportLog(session: ConsoleSession): string {
  if (!session.initialState || !session.info) {
    throw new Error("no active session to export");
  }
  const knobs = session.knobs;
  const features = session.info.feature_names;
  const header = [
    "step",
    ...META_COLUMNS,
    ...knobs.map((k) => `choice_${k}`),
    "overridden",
    ...features,
  ];
  const meta = [
    String(session.options.seed),
    String(session.options.age_years),
    session.options.ecmo_type,
    String(session.options.on_ecmo),
  ];
  const stateRow = (
    step: number,
    chosen: Record<string, Action> | null,
    overridden: string[],
    state: SessionState,
  ) =>
    csvLine([
      String(step),
      ...meta,
      ...knobs.map((k) => (chosen ? chosen[k] ?? "SAME" : "")),
      overridden.join(";"),
      ...features.map((f) => String(state.features[f])),
    ]);
  const lines = [csvLine(header), stateRow(0, null, [], session.initialState)];
  for (const entry of session.timeline) {
    lines.push(stateRow(entry.step, entry.chosen, entry.overridden, entry.state));
  }
  return lines.join("\n") + "\n";
}

export function parseLog(text: string): SessionLog {
  const lines = text.trim().split("\n");
  if (lines.length < 2) {
    throw new Error("session log has no rows");
  }
  const header = splitCsvLine(lines[0]);
  const metaStart = 1;
  const choiceCols: Array<[number, string]> = [];
  header.forEach((h, i) => {
    if (h.startsWith("choice_")) {
      choiceCols.push([i, h.slice("choice_".length)]);
    }
  });
  const overriddenIdx = header.indexOf("overridden");
  const featureNames = header.slice(overriddenIdx + 1);
  const firstRow = splitCsvLine(lines[1]);
  const options: Required<SessionOptions> = {
    seed: Number(firstRow[metaStart]),
    age_years: Number(firstRow[metaStart + 1]),
    ecmo_type: firstRow[metaStart + 2] as "VA" | "VV",
    on_ecmo: firstRow[metaStart + 3] === "true",
  };
  const rows = lines.slice(1).map((line) => {
    const cells = splitCsvLine(line);
    const chosen: Record<string, Action> = {};
    for (const [i, knob] of choiceCols) {
      if (cells[i]) {
        chosen[knob] = cells[i] as Action;
      }
    }
    const features: Record<string, number> = {};
    featureNames.forEach((f, j) => {
      features[f] = Number(cells[overriddenIdx + 1 + j]);
    });
    return {
      step: Number(cells[0]),
      chosen,
      overridden: cells[overriddenIdx] ? cells[overriddenIdx].split(";") : [],
      features,
    };
  });
  return { options, featureNames, knobs: choiceCols.map(([, k]) => k), rows };
}

export interface ReplayResult {
  identical: boolean;
  mismatches: Array<{ step: number; feature: string; logged: number; replayed: number }>;
}

/** Replays the logged choices against a fresh session with the same options
 *  and compares every state feature exactly. */
export async function replayLog(client: ServiceClient, log: SessionLog): Promise<ReplayResult> {
  const session = new ConsoleSession(client);
  await session.start(log.options);
  const mismatches: ReplayResult["mismatches"] = [];
  const compare = (step: number, features: Record<string, number>) => {
    for (const f of log.featureNames) {
      const logged = log.rows.find((r) => r.step === step)!.features[f];
      const replayed = features[f];
      if (logged !== replayed) {
        mismatches.push({ step, feature: f, logged, replayed });
      }
    }
  };
  compare(0, session.state!.features);
  for (const row of log.rows) {
    if (row.step === 0) {
      continue;
    }
    for (const [knob, action] of Object.entries(row.chosen)) {
      session.choose(knob, action);
    }
    const entry = await session.commitStep();
    compare(row.step, entry.state.features);
  }
  return { identical: mismatches.length === 0, mismatches };
}
