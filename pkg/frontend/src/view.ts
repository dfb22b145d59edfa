/** DOM rendering for the alert feed; every displayed field maps 1:1 to an API field. */

import type { AlertFeedStore } from "./store.js";
import type { AlertView } from "./types.js";

export function confidenceClass(view: AlertView): string {
  // UNCERTAIN is visually distinct: it routes ambiguity to a human, not an accusation
  return view.category === "CONFIRMED" ? "badge badge-confirmed" : "badge badge-uncertain";
}

export function cardTitle(view: AlertView): string {
  return `${view.category} ${view.confidence}% - ${view.camera_id} #${view.track_id}`;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderCard(store: AlertFeedStore, view: AlertView): HTMLElement {
  const card = el("article", `alert-card review-${view.review}`);
  card.dataset.alertId = view.alert_id;

  const header = el("header");
  header.append(el("span", confidenceClass(view), `${view.category} ${view.confidence}%`));
  header.append(el("span", "meta", `${view.camera_id} · track ${view.track_id} · ${view.relativeTime}`));
  card.append(header);

  card.append(el("p", "description", view.description));

  const strip = el("div", "frames");
  for (const url of view.snapshotUrls) {
    const img = el("img", "frame");
    img.loading = "lazy"; // snapshots are fetched lazily, and pre-obfuscated by the store
    img.src = url;
    img.onerror = () => img.remove(); // pixel-free deployments have no snapshots
    strip.append(img);
  }
  card.append(strip);

  const actions = el("div", "actions");
  if (view.review === "pending") {
    const confirm = el("button", "confirm", "Confirm");
    const dismiss = el("button", "dismiss", "Dismiss");
    confirm.onclick = () => void store.review(view.alert_id, "confirmed");
    dismiss.onclick = () => void store.review(view.alert_id, "dismissed");
    actions.append(confirm, dismiss);
  } else {
    const note = view.review_note ? ` — ${view.review_note}` : "";
    actions.append(el("span", "reviewed", `${view.review}${note}`));
  }
  card.append(actions);
  return card;
}

export function mount(store: AlertFeedStore, root: HTMLElement): () => void {
  const status = el("div", "status");
  const statsBar = el("div", "stats");
  const pendingList = el("section", "feed pending-feed");
  const historyList = el("section", "feed history-feed");
  root.append(status, statsBar, el("h2", undefined, "Needs review"), pendingList,
              el("h2", undefined, "History"), historyList);

  const render = () => {
    status.textContent = store.stale ? "reconnecting…" : "live";
    status.className = store.stale ? "status stale" : "status live";
    if (store.stats) {
      statsBar.textContent =
        `frames ${store.stats.frames_processed} · triggers ${store.stats.triggers_fired}` +
        ` · VLM calls ${store.stats.vlm_calls} · reduction ${store.stats.reduction_factor}x`;
    }
    pendingList.replaceChildren();
    historyList.replaceChildren();
    for (const view of store.list()) {
      (view.review === "pending" ? pendingList : historyList).append(
        renderCard(store, view),
      );
    }
  };
  render();
  return store.onChange(render);
}
