import type { PanelApi } from "./api.js";
import type { PanelStore } from "./store.js";
import { checkEyeParams } from "./validate.js";

/**
 * Stream parameter form: pick an eye (or broadcast), set fps and JPEG
 * quality. Values are validated locally and nothing is posted unless
 * they pass; the result line reports what the orchestrator accepted.
 */
export class ParamControls {
  private readonly doc: Document;
  private readonly target: HTMLSelectElement;
  private readonly fps: HTMLInputElement;
  private readonly quality: HTMLInputElement;
  private readonly apply: HTMLButtonElement;
  private readonly message: HTMLElement;
  private knownEyes: string[] = [];

  constructor(
    root: HTMLElement,
    private readonly api: PanelApi,
    store: PanelStore,
  ) {
    this.doc = root.ownerDocument;
    const form = this.doc.createElement("form");
    form.className = "param-form";

    this.target = this.doc.createElement("select");
    this.target.name = "target";
    this.fps = this.field("fps", "fps");
    this.quality = this.field("jpeg quality", "quality");
    this.apply = this.doc.createElement("button");
    this.apply.type = "submit";
    this.apply.textContent = "Apply";
    this.message = this.doc.createElement("div");
    this.message.className = "param-message";

    const targetLabel = this.doc.createElement("label");
    targetLabel.textContent = "target ";
    targetLabel.append(this.target);
    form.append(targetLabel, this.fps.parentElement!, this.quality.parentElement!, this.apply);
    root.append(form, this.message);

    form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.submit();
    });
    store.subscribe((state) => {
      const eyes = state.snapshot?.eyes.map((e) => e.id) ?? [];
      this.refreshTargets(eyes);
    });
    this.refreshTargets([]);
  }

  private field(label: string, name: string): HTMLInputElement {
    const wrap = this.doc.createElement("label");
    wrap.textContent = `${label} `;
    const input = this.doc.createElement("input");
    input.name = name;
    input.type = "text";
    input.size = 5;
    wrap.append(input);
    return input;
  }

  private refreshTargets(eyes: string[]): void {
    if (eyes.length === this.knownEyes.length && eyes.every((id, i) => id === this.knownEyes[i])) {
      return;
    }
    this.knownEyes = eyes;
    const selected = this.target.value;
    this.target.replaceChildren();
    const all = this.doc.createElement("option");
    all.value = "all";
    all.textContent = "all eyes";
    this.target.append(all);
    for (const id of eyes) {
      const option = this.doc.createElement("option");
      option.value = id;
      option.textContent = id;
      this.target.append(option);
    }
    if (selected !== "" && (selected === "all" || eyes.includes(selected))) {
      this.target.value = selected;
    }
  }

  private async submit(): Promise<void> {
    const check = checkEyeParams(this.fps.value, this.quality.value);
    if (check.error !== undefined) {
      this.report(check.error, true);
      return;
    }
    const target = this.target.value || "all";
    this.apply.disabled = true;
    try {
      await this.api.setParams(target, check.params!);
      const fields = Object.entries(check.params!)
        .map(([k, v]) => `${k}=${v}`)
        .join(", ");
      this.report(`applied ${fields} to ${target}`, false);
    } catch (err) {
      this.report(err instanceof Error ? err.message : String(err), true);
    } finally {
      this.apply.disabled = false;
    }
  }

  private report(text: string, isError: boolean): void {
    this.message.textContent = text;
    this.message.className = isError ? "param-message error" : "param-message";
  }
}
