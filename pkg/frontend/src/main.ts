import { PanelApi } from "./api.js";
import { PanelStore } from "./store.js";
import { LiveFeed } from "./live.js";
import { EyeDashboard } from "./dashboard.js";
import { ParamControls } from "./params.js";
import { PreviewStrip } from "./previews.js";
import { CalibrationPanel } from "./calibration.js";

// Served by the orchestrator itself, so the API lives at the page origin.
const api = new PanelApi("");
const store = new PanelStore();

function section(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (el === null) {
    throw new Error(`missing #${id} in index.html`);
  }
  return el;
}

new EyeDashboard(section("dashboard"), store);
new ParamControls(section("params"), api, store);
new PreviewStrip(section("previews"), api, store);
new CalibrationPanel(section("calibration"), api, store);

new LiveFeed(api, store).start();
