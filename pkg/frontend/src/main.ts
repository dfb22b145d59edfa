import { DashboardApi } from "./api.js";
import { AlertFeedStore } from "./store.js";
import { mount } from "./view.js";

const base = new URLSearchParams(location.search).get("api") ?? location.origin;
const store = new AlertFeedStore(new DashboardApi(base));
mount(store, document.getElementById("app")!);
void store.refresh();
store.connect();
