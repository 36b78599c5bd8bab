import { beforeEach, describe, expect, it } from "vitest";

import {
  Action,
  ModelInfo,
  Recommendations,
  ServiceClient,
  SessionResponse,
  SessionState,
} from "../src/api.js";
import { ConsoleSession, exportLog, parseLog } from "../src/model.js";

const KNOBS = ["PO2", "FiO2"];
const FEATURES = ["PO2", "ΔPO2", "FiO2", "ΔFiO2"];

function rec(action: Action, pc: number): Recommendations[string] {
  const pd = action === "DEC" ? 0.1 : 0.9;
  return {
    action,
    p_same: 1 - pc,
    p_increase: pc * pd,
    p_decrease: pc * (1 - pd),
    tau: 0.5,
    change_probability: pc,
  };
}

/** Deterministic fake service: state features advance by +1 per step for
 *  every accepted INC, -1 for DEC; recommendations alternate. */
class FakeService {
  calls: string[] = [];
  private counter = 0;

  private state(step: number, base: number): SessionState {
    const features: Record<string, number> = {};
    FEATURES.forEach((f, i) => {
      features[f] = base + step * 10 + i;
    });
    return {
      step,
      values: { PO2: features.PO2, FiO2: features.FiO2 },
      previous_values: {},
      features,
      ecmo_type: "VA",
      on_ecmo: true,
    };
  }

  private recommendations(step: number): Recommendations {
    return {
      PO2: rec(step % 2 === 0 ? "SAME" : "INC", step % 2 === 0 ? 0.1 : 0.8),
      FiO2: rec("SAME", 0.2),
    };
  }

  async modelInfo(): Promise<ModelInfo> {
    this.calls.push("info");
    return {
      fingerprint: { fold: "full" },
      format_version: 1,
      feature_names: FEATURES,
      knobs: KNOBS.map((name) => ({
        name, threshold: 10, tau: 0.5, fallback_direction: "INC" as Action,
        has_direction_model: true,
      })),
      registry: [],
    };
  }

  async startSession(options: { seed?: number }): Promise<SessionResponse> {
    this.calls.push(`start:${options.seed}`);
    this.counter = 0;
    return {
      session_id: "s1",
      state: this.state(0, (options.seed ?? 0) * 100),
      recommendations: this.recommendations(0),
    };
  }

  async step(id: string, actions: Record<string, Action>): Promise<SessionResponse> {
    this.calls.push(`step:${JSON.stringify(actions)}`);
    this.counter += 1;
    return {
      session_id: id,
      state: this.state(this.counter, 0),
      recommendations: this.recommendations(this.counter),
    };
  }

  async predict(features: Record<string, number>): Promise<{ fingerprint: {}; per_knob: Recommendations }> {
    this.calls.push("predict");
    // a visible function of the edited feature so tests can assert pass-through
    const pc = features.FiO2 > 100 ? 0.9 : 0.3;
    return { fingerprint: {}, per_knob: { PO2: rec("SAME", 0.1), FiO2: rec("INC", pc) } };
  }

  async health() {
    return { status: "ok", version: "0", knobs: KNOBS };
  }
}

function makeSession() {
  const fake = new FakeService();
  const session = new ConsoleSession(fake as unknown as ServiceClient);
  return { fake, session };
}

describe("console session", () => {
  let fake: FakeService;
  let session: ConsoleSession;

  beforeEach(async () => {
    ({ fake, session } = makeSession());
    await session.start({ seed: 3 });
  });

  it("presets selectors to the recommendations", () => {
    expect(session.selectors).toEqual({ PO2: "SAME", FiO2: "SAME" });
  });

  it("displays exactly the values the service sent", () => {
    const shown = session.displayed()!;
    expect(shown.FiO2.p_same).toBe(0.8);
    expect(shown.FiO2.change_probability).toBe(0.2);
  });

  it("commit records overrides and resets selectors", async () => {
    session.choose("FiO2", "DEC");
    const entry = await session.commitStep();
    expect(entry.chosen).toEqual({ PO2: "SAME", FiO2: "DEC" });
    expect(entry.overridden).toEqual(["FiO2"]);
    expect(fake.calls).toContain('step:{"PO2":"SAME","FiO2":"DEC"}');
    // new recommendations (step 1: PO2 INC) preset the selectors again
    expect(session.selectors.PO2).toBe("INC");
  });

  it("accepting recommendations repeatedly mirrors service history", async () => {
    for (let i = 0; i < 3; i++) {
      await session.commitStep();
    }
    expect(session.timeline.map((e) => e.step)).toEqual([1, 2, 3]);
    expect(session.timeline.every((e) => e.overridden.length === 0)).toBe(true);
  });

  it("what-if is hypothetical and revertible", async () => {
    const committed = session.recommendations;
    await session.whatIfEdit("FiO2", 200);
    expect(session.displayed()!.FiO2.change_probability).toBe(0.9);
    expect(session.recommendations).toBe(committed); // committed view untouched
    session.revertWhatIf();
    expect(session.displayed()).toBe(committed);
  });

  it("rejects non-finite and unknown what-if edits", async () => {
    await expect(session.whatIfEdit("FiO2", Number.NaN)).rejects.toThrow(/finite/);
    await expect(session.whatIfEdit("Bogus", 1)).rejects.toThrow(/unknown feature/);
  });

  it("commit clears an active what-if", async () => {
    await session.whatIfEdit("FiO2", 200);
    await session.commitStep();
    expect(session.whatIf).toBeNull();
  });

  it("export includes meta, choices, override flags, and full-precision states", async () => {
    session.choose("PO2", "INC");
    await session.commitStep();
    await session.commitStep();
    const text = exportLog(session);
    const log = parseLog(text);
    expect(log.options).toEqual({ seed: 3, age_years: 5, ecmo_type: "VA", on_ecmo: true });
    expect(log.knobs).toEqual(KNOBS);
    expect(log.rows.length).toBe(3); // step 0 + 2 committed steps
    expect(log.rows[0].features.PO2).toBe(300); // seed*100 base from the fake
    expect(log.rows[1].chosen).toEqual({ PO2: "INC", FiO2: "SAME" });
    expect(log.rows[1].overridden).toEqual(["PO2"]);
    expect(log.rows[2].features["ΔPO2"]).toBe(21);
  });

  it("refuses concurrent steps", async () => {
    const first = session.commitStep();
    await expect(session.commitStep()).rejects.toThrow(/in flight/);
    await first;
  });
});
