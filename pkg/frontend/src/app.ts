// blend-studio: single-page UI for interactive style blending.
//
// Wiring only — the behavior that matters (weight quantization, bilinear
// pad weights, debounce, latest-wins requests, chart scaling) lives in the
// imported modules, which is where the tests point.

import { ApiError, PasticheClient, StylesInfo } from "./api.js";
import { lossChartSvg } from "./chart.js";
import { debounce } from "./debounce.js";
import { LatestGate } from "./latest.js";
import { padWeights } from "./pad.js";
import { formatWeights, quantizeWeights, sliderWeights } from "./weights.js";

const MAX_ACTIVE = 4;
const SWEEP_STEPS = 9;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

class Studio {
  private readonly client: PasticheClient;
  private readonly gate = new LatestGate<Blob>();
  private info: StylesInfo = { styles: [], per_style_parameters: 0, loss_caches: [] };
  private active: string[] = [];
  private contentId: string | null = null;
  private lastObjectUrl: string | null = null;
  private readonly sendBlend = debounce((weights: Record<string, number>) => {
    void this.blendNow(weights);
  }, 150);

  constructor(apiBase: string) {
    this.client = new PasticheClient(apiBase);
  }

  async boot(): Promise<void> {
    this.info = await this.client.styles();
    this.active = this.info.styles.slice(0, Math.min(2, this.info.styles.length));
    this.renderPalette();
    this.renderControls();
    this.wireUpload();
    this.restoreContentFromHash();
    el<HTMLButtonElement>("sweep-button").onclick = () => void this.runSweep();
  }

  // --- content ------------------------------------------------------------

  private wireUpload(): void {
    const input = el<HTMLInputElement>("content-file");
    input.onchange = async () => {
      const file = input.files?.[0];
      if (!file) return;
      try {
        const info = await this.client.uploadContent(file);
        this.contentId = info.content_id;
        window.location.hash = `c=${info.content_id}`;
        el("content-label").textContent = `${file.name} → ${info.width}×${info.height}, id ${info.content_id.slice(0, 12)}…`;
        this.clearError();
        this.requestBlend();
      } catch (error) {
        this.showError(error);
      }
    };
  }

  private restoreContentFromHash(): void {
    const match = /[#&]c=([0-9a-f]{64})/.exec(window.location.hash);
    if (match) {
      this.contentId = match[1];
      el("content-label").textContent = `content id ${match[1].slice(0, 12)}… (from URL)`;
      this.requestBlend();
    }
  }

  // --- palette and weight controls ----------------------------------------

  private renderPalette(): void {
    const host = el("palette");
    host.textContent = "";
    for (const name of this.info.styles) {
      const label = document.createElement("label");
      const box = document.createElement("input");
      box.type = "checkbox";
      box.checked = this.active.includes(name);
      box.onchange = () => {
        if (box.checked) {
          if (this.active.length >= MAX_ACTIVE) {
            box.checked = false;
            this.showError(new Error(`at most ${MAX_ACTIVE} active styles`));
            return;
          }
          this.active.push(name);
        } else {
          this.active = this.active.filter((n) => n !== name);
        }
        this.clearError();
        this.renderControls();
      };
      label.append(box, ` ${name}`);
      host.append(label);
    }
    el("per-style").textContent =
      `${this.info.per_style_parameters} parameters per style`;
  }

  private renderControls(): void {
    const host = el("controls");
    host.textContent = "";
    const n = this.active.length;
    if (n === 0) {
      host.textContent = "pick at least one style";
      return;
    }
    if (n === 1) {
      // Degenerate convexity: the single weight is locked at 1, no slider.
      this.updateWeights({ [this.active[0]]: 1 });
      return;
    }
    if (n === 2) this.renderAlphaSlider(host);
    else if (n === 3) this.renderTripleSliders(host);
    else this.renderPad(host);
  }

  private renderAlphaSlider(host: HTMLElement): void {
    const [a, b] = this.active;
    const slider = document.createElement("input");
    slider.type = "range";
    slider.min = "0";
    slider.max = "1";
    slider.step = "0.001";
    slider.value = "0.5";
    const caption = document.createElement("div");
    caption.className = "caption";
    caption.textContent = `α = weight of ${a} (1 − α goes to ${b})`;
    const apply = () => this.updateWeights(sliderWeights(a, b, Number(slider.value)));
    slider.oninput = apply;
    host.append(caption, slider);
    apply();
  }

  private renderTripleSliders(host: HTMLElement): void {
    const sliders = new Map<string, HTMLInputElement>();
    const apply = () => {
      const raw: Record<string, number> = {};
      sliders.forEach((s, name) => {
        raw[name] = Number(s.value);
      });
      this.updateWeights(quantizeWeights(raw));
    };
    for (const name of this.active) {
      const row = document.createElement("div");
      const slider = document.createElement("input");
      slider.type = "range";
      slider.min = "0";
      slider.max = "1";
      slider.step = "0.001";
      slider.value = "0.333";
      slider.oninput = apply;
      sliders.set(name, slider);
      row.append(`${name} `, slider);
      host.append(row);
    }
    apply();
  }

  private renderPad(host: HTMLElement): void {
    const corners = this.active.slice(0, 4) as [string, string, string, string];
    const pad = document.createElement("div");
    pad.id = "pad";
    const dot = document.createElement("div");
    dot.id = "pad-dot";
    pad.append(dot);
    const caption = document.createElement("div");
    caption.className = "caption";
    caption.textContent = `corners: ${corners.join(" / ")}`;

    const moveTo = (event: PointerEvent) => {
      const rect = pad.getBoundingClientRect();
      const u = (event.clientX - rect.left) / rect.width;
      const v = (event.clientY - rect.top) / rect.height;
      dot.style.left = `${Math.min(1, Math.max(0, u)) * 100}%`;
      dot.style.top = `${Math.min(1, Math.max(0, v)) * 100}%`;
      this.updateWeights(quantizeWeights(padWeights(corners, { u, v })));
    };
    let down = false;
    pad.onpointerdown = (e) => {
      down = true;
      pad.setPointerCapture(e.pointerId);
      moveTo(e);
    };
    pad.onpointermove = (e) => {
      if (down) moveTo(e);
    };
    pad.onpointerup = () => {
      down = false;
    };
    host.append(caption, pad);
    this.updateWeights(quantizeWeights(padWeights(corners, { u: 0.5, v: 0.5 })));
  }

  // --- requests -------------------------------------------------------------

  private currentWeights: Record<string, number> = {};

  /** Display exactly what will be sent, then send it (debounced). */
  private updateWeights(weights: Record<string, number>): void {
    this.currentWeights = weights;
    el("weights-label").textContent = formatWeights(weights);
    this.sendBlend(weights);
  }

  private requestBlend(): void {
    if (Object.keys(this.currentWeights).length > 0) {
      this.sendBlend(this.currentWeights);
    }
  }

  private async blendNow(weights: Record<string, number>): Promise<void> {
    if (!this.contentId) return;
    const id = this.contentId;
    try {
      const blob = await this.gate.submit(() => this.client.blend(id, weights));
      if (blob === undefined) return; // superseded by a newer request
      const img = el<HTMLImageElement>("pastiche");
      if (this.lastObjectUrl) URL.revokeObjectURL(this.lastObjectUrl);
      this.lastObjectUrl = URL.createObjectURL(blob);
      img.src = this.lastObjectUrl;
      this.clearError();
    } catch (error) {
      this.showError(error, weights);
    }
  }

  private async runSweep(): Promise<void> {
    if (!this.contentId) {
      this.showError(new Error("upload a content image first"));
      return;
    }
    if (this.active.length < 2) {
      this.showError(new Error("pick two styles to sweep between"));
      return;
    }
    const [a, b] = this.active;
    const button = el<HTMLButtonElement>("sweep-button");
    button.disabled = true; // sweeps run exclusively
    try {
      const result = await this.client.sweep(this.contentId, a, b, SWEEP_STEPS);
      el("chart").innerHTML = lossChartSvg(result.frames, a, b);
      const strip = el("sweep-frames");
      strip.textContent = "";
      for (const frame of result.frames) {
        const img = document.createElement("img");
        img.src = `data:image/png;base64,${frame.png_base64}`;
        img.title = `α=${frame.alpha.toFixed(3)}`;
        strip.append(img);
      }
      this.clearError();
    } catch (error) {
      this.showError(error);
    } finally {
      button.disabled = false;
    }
  }

  // --- error display --------------------------------------------------------

  private showError(error: unknown, weights?: Record<string, number>): void {
    const box = el("error");
    const prefix = weights ? `weights ${formatWeights(weights)}: ` : "";
    if (error instanceof ApiError) {
      box.textContent = `${prefix}${error.code} (${error.status}): ${error.message}`;
    } else {
      box.textContent = `${prefix}${String(error)}`;
    }
  }

  private clearError(): void {
    el("error").textContent = "";
  }
}

const apiBase = new URLSearchParams(window.location.search).get("api") ?? "";
void new Studio(apiBase).boot().catch((error) => {
  document.body.textContent = `failed to reach the pastiche service: ${String(error)}`;
});
