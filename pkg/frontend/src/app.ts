// Browser wiring: controls -> API -> comparison table + map. Every rendered
// number comes from a server document field.

import { ApiClient } from "./api.js";
import { buildComparisonTable, renderComparisonHTML } from "./comparison.js";
import { renderMapSVG } from "./map.js";
import { pollPortfolio } from "./poll.js";
import {
  defaultSelection,
  initialState,
  SessionState,
  toggleEntry,
  validateDelta,
  validateEpsilon,
} from "./state.js";
import type { PortfolioDocument } from "./types.js";

export class ExplorerApp {
  state: SessionState = initialState();
  doc: PortfolioDocument | null = null;

  constructor(
    private client: ApiClient,
    private root: HTMLElement,
  ) {}

  mount(): void {
    this.root.innerHTML = `
      <section class="controls">
        <label>instance <input type="file" id="instance-file"></label>
        <label>subsidy &delta; <input type="number" id="delta" step="0.005" value="0.02"></label>
        <label>&epsilon; <input type="number" id="epsilon" step="0.05" value="0.25"></label>
        <button id="run">build portfolio</button>
        <span id="status"></span>
      </section>
      <section id="picker"></section>
      <section id="comparison"></section>
      <section id="maps"></section>`;
    this.el("run").addEventListener("click", () => void this.run());
    this.el("instance-file").addEventListener("change", (ev) => void this.upload(ev));
  }

  private el(id: string): HTMLElement {
    const node = this.root.querySelector(`#${id}`);
    if (!node) throw new Error(`missing #${id}`);
    return node as HTMLElement;
  }

  private setStatus(text: string): void {
    this.el("status").textContent = text;
  }

  async upload(ev: Event): Promise<void> {
    const input = ev.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    try {
      const doc = JSON.parse(await file.text());
      this.state.instanceId = await this.client.uploadInstance(doc);
      this.setStatus(`instance ${this.state.instanceId}`);
    } catch (e) {
      this.setStatus(`upload failed: ${(e as Error).message}`);
    }
  }

  async run(): Promise<void> {
    const delta = Number((this.el("delta") as HTMLInputElement).value);
    const epsilon = Number((this.el("epsilon") as HTMLInputElement).value);
    const problem = validateDelta(delta) ?? validateEpsilon(epsilon);
    if (problem) {
      this.setStatus(problem);
      return;
    }
    if (!this.state.instanceId) {
      this.setStatus("upload an instance first");
      return;
    }
    const instanceId = this.state.instanceId;
    this.state = { ...this.state, delta, epsilon, jobState: "running" };
    this.setStatus("running...");
    const jobId = await this.client.requestPortfolio({
      instance_id: instanceId,
      delta,
      epsilon,
    });
    this.state.jobId = jobId;
    const res = await pollPortfolio(this.client, jobId);
    if (!res.ok) {
      this.state = { ...this.state, jobState: "failed", jobError: res.error };
      this.setStatus(res.error); // server error, verbatim
      return;
    }
    this.doc = res.doc;
    this.state = {
      ...this.state,
      jobState: "done",
      selectedEntries: defaultSelection(res.doc.entries.length),
    };
    this.setStatus(`${res.doc.entries.length} solutions`);
    this.renderPicker();
    await this.renderResults();
  }

  private renderPicker(): void {
    if (!this.doc) return;
    const picker = this.el("picker");
    picker.innerHTML = this.doc.entries
      .map(
        (e, k) =>
          `<label><input type="checkbox" data-k="${k}" ${
            this.state.selectedEntries.includes(k) ? "checked" : ""
          }> ${e.label}</label>`,
      )
      .join(" ");
    picker.querySelectorAll("input").forEach((box) => {
      box.addEventListener("change", () => {
        this.state = toggleEntry(this.state, Number(box.dataset.k));
        this.renderPicker();
        void this.renderResults();
      });
    });
  }

  async renderResults(): Promise<void> {
    if (!this.doc || this.state.selectedEntries.length === 0) return;
    const table = buildComparisonTable(this.doc, this.state.selectedEntries);
    this.el("comparison").innerHTML = renderComparisonHTML(table);
    if (!this.doc.job_id) return;
    const maps: string[] = [];
    for (const k of this.state.selectedEntries) {
      try {
        const geo = await this.client.getSolutionGeo(this.doc.job_id, k);
        maps.push(`<figure><figcaption>${geo.entry}</figcaption>${renderMapSVG(geo)}</figure>`);
      } catch {
        // instances without coordinates have no map view
      }
    }
    this.el("maps").innerHTML = maps.join("");
  }
}

export function boot(baseUrl = ""): void {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app");
  const app = new ExplorerApp(new ApiClient(baseUrl), root);
  app.mount();
}
