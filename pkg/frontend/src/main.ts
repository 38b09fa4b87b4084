import { ApiClient } from "./api.js";
import { SessionController } from "./session.js";
import { Label } from "./types.js";
import { renderSession } from "./view.js";

const params = new URLSearchParams(window.location.search);
const serviceUrl = params.get("service") ?? "http://127.0.0.1:8008";
const client = new ApiClient(serviceUrl);
const controller = new SessionController(client);

const picker = document.getElementById("picker") as HTMLElement;
const root = document.getElementById("session") as HTMLElement;

async function populatePicker(): Promise<void> {
  try {
    const [datasets, caps] = await Promise.all([client.datasets(), client.capabilities()]);
    const datasetOptions = datasets
      .map(
        (d) =>
          `<option value="${d.name}">${d.name} (${d.positive_bags} positive of ${d.bags} bags)</option>`,
      )
      .join("");
    const strategyOptions = caps.strategies
      .map((s) => `<option value="${s}">${s}</option>`)
      .join("");
    picker.innerHTML =
      `<label>Dataset <select id="dataset">${datasetOptions}</select></label> ` +
      `<label>Strategy <select id="strategy">${strategyOptions}</select></label> ` +
      `<button id="start">Start session</button>`;
    document.getElementById("start")?.addEventListener("click", () => {
      const dataset = (document.getElementById("dataset") as HTMLSelectElement).value;
      const strategy = (document.getElementById("strategy") as HTMLSelectElement).value;
      void controller.start(dataset, strategy);
    });
  } catch (err) {
    const message = err instanceof Error ? err.message : String(err);
    picker.innerHTML =
      `<div class="banner error">Service unreachable at ${serviceUrl}: ${message} ` +
      `<button id="reload-picker">Retry</button></div>`;
    document.getElementById("reload-picker")?.addEventListener("click", () => {
      void populatePicker();
    });
  }
}

controller.onChange((view) => {
  if (view.summary) {
    window.location.hash = view.summary.id;
  }
  root.innerHTML = renderSession(view);
});

root.addEventListener("click", (event) => {
  const target = event.target as HTMLElement;
  if (target.classList.contains("label-btn")) {
    const index = Number(target.dataset.index);
    const label = Number(target.dataset.label) as Label;
    controller.setLabel(index, label);
  } else if (target.id === "submit-labels") {
    void controller.submit();
  } else if (target.id === "retry") {
    const id = controller.sessionId ?? window.location.hash.slice(1);
    if (id) {
      void controller.resume(id);
    }
  }
});

void populatePicker();
// a session id in the hash survives refreshes; the view is rebuilt from the server
if (window.location.hash.length > 1) {
  void controller.resume(window.location.hash.slice(1));
}
