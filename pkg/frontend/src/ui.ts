// DOM rendering for the console. Every number on screen is a value the
// service sent; this layer only formats and arranges.

import { Action, RegistryEntry } from "./api.js";
import { ACTION_LABELS, barWidths, formatDelta, formatProbability, formatValue } from "./format.js";
import { ConsoleSession, exportLog } from "./model.js";

const ACTIONS: Action[] = ["INC", "SAME", "DEC"];
const BAR_CLASS: Record<Action, string> = { SAME: "bar-same", INC: "bar-inc", DEC: "bar-dec" };

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

export class ConsoleUI {
  private root: HTMLElement;
  private banner: HTMLElement;
  private statePanel: HTMLElement;
  private cards: HTMLElement;
  private timeline: HTMLElement;
  private whatIfPanel: HTMLElement;
  private rerender: () => void;

  constructor(root: HTMLElement, private session: ConsoleSession) {
    this.root = root;
    this.banner = el("div", "banner hidden");
    this.statePanel = el("div", "state-panel");
    this.cards = el("div", "cards");
    this.timeline = el("div", "timeline");
    this.whatIfPanel = el("div", "whatif");
    this.rerender = () => this.render();
  }

  mount(): void {
    this.root.append(this.banner, this.buildControls(), this.cards,
                     this.whatIfPanel, this.statePanel, this.timeline);
    this.render();
  }

  showError(message: string): void {
    this.banner.textContent = message;
    this.banner.classList.remove("hidden");
  }

  clearError(): void {
    this.banner.classList.add("hidden");
  }

  private buildControls(): HTMLElement {
    const bar = el("div", "controls");
    const seed = el("input") as HTMLInputElement;
    seed.type = "number";
    seed.value = "0";
    seed.id = "seed";
    const startBtn = el("button", "", "Start session");
    startBtn.onclick = async () => {
      try {
        await this.session.start({ seed: Number(seed.value) });
        this.clearError();
      } catch (err) {
        this.showError(`service unreachable or incompatible: ${err}`);
      }
      this.render();
    };
    const stepBtn = el("button", "", "Commit step");
    stepBtn.id = "commit";
    stepBtn.onclick = async () => {
      stepBtn.disabled = true;
      try {
        await this.session.commitStep();
        this.clearError();
      } catch (err) {
        this.showError(`step failed: ${err}`);
      } finally {
        stepBtn.disabled = false;
      }
      this.render();
    };
    const exportBtn = el("button", "", "Export session log");
    exportBtn.onclick = () => {
      const blob = new Blob([exportLog(this.session)], { type: "text/csv" });
      const a = el("a") as HTMLAnchorElement;
      a.href = URL.createObjectURL(blob);
      a.download = "session-log.csv";
      a.click();
      URL.revokeObjectURL(a.href);
    };
    bar.append(el("label", "", "Seed "), seed, startBtn, stepBtn, exportBtn);
    return bar;
  }

  render(): void {
    this.renderCards();
    this.renderWhatIf();
    this.renderState();
    this.renderTimeline();
    const commit = document.getElementById("commit") as HTMLButtonElement | null;
    if (commit) {
      commit.disabled = this.session.pending || !this.session.sessionId;
    }
  }

  private renderCards(): void {
    this.cards.replaceChildren();
    const recs = this.session.displayed();
    if (!recs) {
      this.cards.append(el("p", "placeholder", "Start a session to see recommendations."));
      return;
    }
    const hypothetical = this.session.whatIf !== null;
    for (const [knob, rec] of Object.entries(recs)) {
      const card = el("div", "card" + (hypothetical ? " hypothetical" : ""));
      card.dataset.knob = knob;
      card.append(el("h3", "", knob));
      card.append(el("div", "recommended",
                     `recommended: ${ACTION_LABELS[rec.action]}`));
      const widths = barWidths(rec);
      for (const action of ACTIONS) {
        const row = el("div", "bar-row");
        const p = { SAME: rec.p_same, INC: rec.p_increase, DEC: rec.p_decrease }[action];
        row.append(el("span", "bar-label", ACTION_LABELS[action]));
        const track = el("div", "bar-track");
        const fill = el("div", "bar-fill " + BAR_CLASS[action]);
        fill.style.width = widths[action].toFixed(2) + "%";
        track.append(fill);
        row.append(track);
        row.append(el("span", "bar-value", formatProbability(p)));
        card.append(row);
      }
      card.append(el("div", "meta",
                     `p(change)=${formatProbability(rec.change_probability)} τ=${rec.tau.toFixed(2)}`));
      if (!hypothetical) {
        const selector = el("div", "selector");
        for (const action of ACTIONS) {
          const label = el("label");
          const radio = el("input") as HTMLInputElement;
          radio.type = "radio";
          radio.name = `choice-${knob}`;
          radio.value = action;
          radio.checked = this.session.selectors[knob] === action;
          radio.onchange = () => {
            this.session.choose(knob, action);
            this.rerender();
          };
          label.append(radio, document.createTextNode(ACTION_LABELS[action]));
          selector.append(label);
        }
        if (this.session.selectors[knob] !== rec.action) {
          card.classList.add("override");
        }
        card.append(selector);
      }
      this.cards.append(card);
    }
  }

  private renderWhatIf(): void {
    this.whatIfPanel.replaceChildren();
    if (!this.session.info || !this.session.state) {
      return;
    }
    this.whatIfPanel.append(el("h3", "", "What-if (hypothetical, does not step)"));
    const select = el("select") as HTMLSelectElement;
    for (const name of this.session.info.feature_names) {
      const opt = el("option", "", name) as HTMLOptionElement;
      opt.value = name;
      select.append(opt);
    }
    const value = el("input") as HTMLInputElement;
    value.type = "number";
    value.step = "any";
    const apply = el("button", "", "Preview");
    apply.onclick = async () => {
      const v = Number(value.value);
      if (!Number.isFinite(v)) {
        this.showError("what-if values must be finite numbers");
        return;
      }
      try {
        await this.session.whatIfEdit(select.value, v);
        this.clearError();
      } catch (err) {
        this.showError(`what-if failed: ${err}`);
      }
      this.render();
    };
    const revert = el("button", "", "Revert");
    revert.onclick = () => {
      this.session.revertWhatIf();
      this.render();
    };
    this.whatIfPanel.append(select, value, apply, revert);
    if (this.session.whatIf) {
      this.whatIfPanel.append(el("span", "hypo-flag",
        ` previewing ${this.session.whatIf.feature}=${this.session.whatIf.value}`));
    }
  }

  private renderState(): void {
    this.statePanel.replaceChildren();
    const state = this.session.state;
    const info = this.session.info;
    if (!state || !info) {
      return;
    }
    this.statePanel.append(el("h3", "", `Patient state — step ${state.step} `
      + `(${state.ecmo_type}, ${state.on_ecmo ? "on" : "off"} ECMO)`));
    const byCategory = new Map<string, RegistryEntry[]>();
    for (const entry of info.registry) {
      const group = byCategory.get(entry.category) ?? [];
      group.push(entry);
      byCategory.set(entry.category, group);
    }
    for (const [category, entries] of byCategory) {
      const section = el("div", "state-group");
      section.append(el("h4", "", category));
      const table = el("table");
      for (const entry of entries) {
        const row = el("tr");
        row.append(el("td", "var-name", entry.name));
        row.append(el("td", "var-value", formatValue(state.features[entry.name])));
        row.append(el("td", "var-delta", formatDelta(state.features["Δ" + entry.name])));
        row.append(el("td", "var-unit", entry.unit));
        table.append(row);
      }
      section.append(table);
      this.statePanel.append(section);
    }
  }

  private renderTimeline(): void {
    this.timeline.replaceChildren();
    if (!this.session.timeline.length) {
      return;
    }
    this.timeline.append(el("h3", "", "Timeline"));
    for (const entry of [...this.session.timeline].reverse()) {
      const row = el("div", "timeline-entry");
      const chosen = Object.entries(entry.chosen)
        .map(([k, a]) => `${k}:${a}${entry.overridden.includes(k) ? "*" : ""}`)
        .join("  ");
      row.append(el("span", "step-no", `step ${entry.step}`));
      row.append(el("span", "choices", chosen));
      if (entry.overridden.length) {
        row.append(el("span", "override-flag",
                      `overrode ${entry.overridden.join(", ")}`));
      }
      this.timeline.append(row);
    }
  }
}
