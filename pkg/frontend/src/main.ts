/** DOM wiring: binds index.html controls to the controller and renders state. */

import { ToneguideClient } from "./api";
import { StudioController } from "./controller";
import { activeRange, Store, ViewState } from "./state";

const HEALTH_INTERVAL_MS = 5000;

function el<T extends HTMLElement>(root: Document, id: string): T {
  const node = root.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

export interface Studio {
  controller: StudioController;
  store: Store;
  stop(): void;
}

export function boot(root: Document, client?: ToneguideClient): Studio {
  const api =
    client ??
    new ToneguideClient(new URLSearchParams(root.location?.search ?? "").get("api") ?? "");

  const fileInput = el<HTMLInputElement>(root, "file");
  const beforeImg = el<HTMLImageElement>(root, "before-img");
  const afterImg = el<HTMLImageElement>(root, "after-img");
  const compare = el<HTMLDivElement>(root, "compare");
  const scoreInput = el<HTMLInputElement>(root, "score");
  const scoreValue = el<HTMLOutputElement>(root, "score-value");
  const advancedInput = el<HTMLInputElement>(root, "advanced");
  const labelSelect = el<HTMLSelectElement>(root, "label-mode");
  const roundsInput = el<HTMLInputElement>(root, "rounds");
  const viewSelect = el<HTMLSelectElement>(root, "view-mode");
  const ratingInput = el<HTMLInputElement>(root, "rating");
  const ratingValue = el<HTMLOutputElement>(root, "rating-value");
  const rateBtn = el<HTMLButtonElement>(root, "rate-btn");
  const finetuneBtn = el<HTMLButtonElement>(root, "finetune-btn");
  const finetuneStatus = el<HTMLSpanElement>(root, "finetune-status");
  const ratingsList = el<HTMLUListElement>(root, "ratings-list");
  const banner = el<HTMLSpanElement>(root, "banner");
  const errorArea = el<HTMLSpanElement>(root, "error");

  for (let cluster = 1; cluster <= 10; cluster++) {
    const option = root.createElement("option");
    option.value = String(cluster);
    option.textContent = String(cluster);
    labelSelect.append(option);
  }

  const store = new Store();
  let previewUrl: string | null = null;
  const present = (blob: Blob) => {
    const url = URL.createObjectURL(blob);
    if (previewUrl !== null) URL.revokeObjectURL(previewUrl);
    previewUrl = url;
    afterImg.src = url;
  };
  const controller = new StudioController(api, store, present);

  fileInput.addEventListener("change", () => {
    const file = fileInput.files?.[0];
    if (!file) return;
    beforeImg.src = URL.createObjectURL(file);
    void controller.upload(file);
  });
  scoreInput.addEventListener("input", () => {
    controller.onScoreInput(Number(scoreInput.value));
  });
  advancedInput.addEventListener("change", () => {
    controller.setAdvanced(advancedInput.checked);
  });
  labelSelect.addEventListener("change", () => {
    const v = labelSelect.value;
    controller.setLabelMode(v === "auto" ? "auto" : Number(v));
  });
  roundsInput.addEventListener("change", () => {
    controller.setRounds(Number(roundsInput.value));
  });
  viewSelect.addEventListener("change", () => {
    controller.setView(viewSelect.value as ViewState["view"]);
  });
  ratingInput.addEventListener("input", () => {
    ratingValue.textContent = Number(ratingInput.value).toFixed(1);
  });
  rateBtn.addEventListener("click", () => {
    void controller.submitRating(Number(ratingInput.value));
  });
  finetuneBtn.addEventListener("click", () => {
    void controller.startFinetune();
  });

  const unsubscribe = store.subscribe((state) => render(state));

  function render(state: ViewState): void {
    const [lo, hi] = activeRange(state);
    scoreInput.min = String(lo);
    scoreInput.max = String(hi);
    scoreInput.value = String(state.score);
    scoreValue.textContent = state.score.toFixed(2);
    scoreInput.disabled = !state.online || state.imageId === null;
    compare.className = state.view;
    banner.classList.toggle("visible", !state.online);
    errorArea.textContent = state.error ?? "";
    rateBtn.disabled = state.imageId === null || !state.online;
    finetuneBtn.disabled =
      state.finetune.running || state.ratings.length === 0 || !state.online;
    finetuneStatus.textContent = state.finetune.running
      ? `fine-tuning ${state.finetune.epochsDone}/${state.finetune.epochsTotal}`
      : state.finetune.completedRuns > 0
        ? `fine-tuned (${state.finetune.completedRuns} run${state.finetune.completedRuns > 1 ? "s" : ""})`
        : "";
    ratingsList.replaceChildren(
      ...state.ratings.map((entry) => {
        const item = root.createElement("li");
        item.textContent = `rated ${entry.rating.toFixed(1)} at score ${entry.scoreContext.toFixed(2)}`;
        return item;
      }),
    );
  }

  const healthTimer = setInterval(() => {
    void controller.checkHealth();
  }, HEALTH_INTERVAL_MS);

  return {
    controller,
    store,
    stop() {
      clearInterval(healthTimer);
      unsubscribe();
    },
  };
}

if (typeof document !== "undefined" && document.getElementById("app") !== null) {
  boot(document);
}
