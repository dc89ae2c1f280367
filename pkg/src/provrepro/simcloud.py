"""In-process IaaS simulator: VM lifecycle, inventory, and a container object store.

State lives under ``<home>/cloud``::

    instances            one JSON record per provision/destroy event (last wins per ip)
    index                one JSON record per object write: container, filename, md5
    objects/<c>/<f>      object payloads

IPs come from 172.16.1.0/24 starting at .2 and are never reused within one
state directory, so an IP identifies exactly one VM for the lifetime of the
directory.
"""

from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import replace
from pathlib import Path

from ._storage import JsonlLog, WriterLock, atomic_write, home_dir
from .errors import (
    FileNotFound,
    InvalidName,
    IpSpaceExhausted,
    NoSuchInstance,
    UnknownFlavor,
    UnknownImage,
)
from .model import CloudFile, Flavor, Image, VmInstance, VmState

logger = logging.getLogger(__name__)

DEFAULT_OWNER = "researcher"

DEFAULT_FLAVORS = (
    Flavor(1, "m1.tiny", 512, 20, 1),
    Flavor(2, "m1.small", 2048, 20, 1),
    Flavor(3, "m1.medium", 4096, 20, 1),
)
DEFAULT_IMAGES = (Image("f102960c-557c-4253-8277-2df5ffe3c169", "wf_peg_repeat"),)

IP_PREFIX = "172.16.1."
FIRST_OCTET = 2
LAST_OCTET = 254


def check_name(name: str, what: str) -> None:
    if not isinstance(name, str) or not name:
        raise InvalidName(f"{what} must be a non-empty string")
    if "/" in name or "\\" in name or "\0" in name or name.startswith("."):
        raise InvalidName(f"{what} {name!r}: no path separators or leading dots")


class SimCloud:
    """Deterministic cloud middleware plus object store backed by a directory.

    Mutations (provision, destroy, put) are serialized through one writer
    lock shared by threads and processes; reads never take it.
    """

    def __init__(
        self,
        home: str | os.PathLike | None = None,
        flavors: tuple[Flavor, ...] = DEFAULT_FLAVORS,
        images: tuple[Image, ...] = DEFAULT_IMAGES,
    ):
        self.root = home_dir(home) / "cloud"
        self.objects_dir = self.root / "objects"
        self.objects_dir.mkdir(parents=True, exist_ok=True)
        self._flavors = {f.flavor_id: f for f in flavors}
        self._images = {i.image_id: i for i in images}
        if len(self._flavors) != len(flavors) or len(self._images) != len(images):
            raise ValueError("catalog ids must be unique")
        self._instances_log = JsonlLog(self.root / "instances")
        self._index_log = JsonlLog(self.root / "index")
        self._instances: dict[str, VmInstance] = {}
        self._index: dict[tuple[str, str], str] = {}
        self._lock = WriterLock(self.root / ".lock")

    # -- catalogs --------------------------------------------------------

    @property
    def flavors(self) -> tuple[Flavor, ...]:
        return tuple(self._flavors.values())

    @property
    def images(self) -> tuple[Image, ...]:
        return tuple(self._images.values())

    def flavor(self, flavor_id: int) -> Flavor:
        try:
            return self._flavors[flavor_id]
        except KeyError:
            raise UnknownFlavor(f"no flavor with id {flavor_id}") from None

    def flavor_by_name(self, name: str) -> Flavor:
        for f in self._flavors.values():
            if f.name == name:
                return f
        raise UnknownFlavor(f"no flavor named {name!r}")

    def image(self, image_id: str) -> Image:
        try:
            return self._images[image_id]
        except KeyError:
            raise UnknownImage(f"no image with id {image_id!r}") from None

    def image_by_name(self, name: str) -> Image:
        for i in self._images.values():
            if i.image_name == name:
                return i
        raise UnknownImage(f"no image named {name!r}")

    # -- VM lifecycle ----------------------------------------------------

    def _sync_instances(self) -> dict[str, VmInstance]:
        for rec in self._instances_log.read_new():
            vm = VmInstance.from_dict(rec)
            self._instances[vm.ip] = vm
        return self._instances

    @property
    def next_ip_octet(self) -> int:
        return FIRST_OCTET + len(self._sync_instances())

    def provision_vm(
        self, flavor_id: int, image_id: str, nodename: str, owner: str = DEFAULT_OWNER
    ) -> VmInstance:
        self.flavor(flavor_id)
        self.image(image_id)
        if not nodename:
            raise InvalidName("nodename must be non-empty")
        with self._lock():
            instances = self._sync_instances()
            octet = FIRST_OCTET + len(instances)
            if octet > LAST_OCTET:
                raise IpSpaceExhausted(f"all addresses in {IP_PREFIX}0/24 have been used")
            vm = VmInstance(
                ip=f"{IP_PREFIX}{octet}",
                nodename=nodename,
                flavor_id=flavor_id,
                image_id=image_id,
                state=VmState.ACTIVE,
                owner=owner,
                seq=len(instances),
            )
            self._instances_log.append(vm.to_dict())
            self._instances[vm.ip] = vm
        logger.debug("provisioned %s (%s) flavor=%s", vm.ip, nodename, flavor_id)
        return vm

    def destroy_vm(self, ip: str) -> None:
        with self._lock():
            vm = self._sync_instances().get(ip)
            if vm is None or not vm.active:
                raise NoSuchInstance(f"no active instance with ip {ip}")
            gone = replace(vm, state=VmState.DESTROYED)
            self._instances_log.append(gone.to_dict())
            self._instances[ip] = gone

    def list_vms(self, owner: str | None = DEFAULT_OWNER) -> list[VmInstance]:
        """Active instances of ``owner`` (all owners if None), in provisioning order."""
        vms = [
            vm
            for vm in self._sync_instances().values()
            if vm.active and (owner is None or vm.owner == owner)
        ]
        return sorted(vms, key=lambda vm: vm.seq)

    def instance(self, ip: str) -> VmInstance:
        """Look up an instance by ip regardless of state."""
        try:
            return self._sync_instances()[ip]
        except KeyError:
            raise NoSuchInstance(f"no instance with ip {ip}") from None

    # -- object store ----------------------------------------------------

    def _path(self, container: str, filename: str) -> Path:
        return self.objects_dir / container / filename

    def _sync_index(self) -> dict[tuple[str, str], str]:
        for rec in self._index_log.read_new():
            self._index[(rec["container"], rec["filename"])] = rec["md5"]
        return self._index

    def put_cloud_file(self, container: str, filename: str, content: bytes) -> CloudFile:
        check_name(container, "container")
        check_name(filename, "filename")
        content = bytes(content)
        digest = hashlib.md5(content).hexdigest()
        with self._lock():
            atomic_write(self._path(container, filename), content)
            self._index_log.append({"container": container, "filename": filename, "md5": digest})
        return CloudFile(container, filename, content, digest)

    def get_cloud_file(self, container: str, filename: str) -> CloudFile:
        check_name(container, "container")
        check_name(filename, "filename")
        try:
            content = self._path(container, filename).read_bytes()
        except FileNotFoundError:
            raise FileNotFound(container, filename) from None
        cf = CloudFile(container, filename, content)
        cached = self._sync_index().get((container, filename))
        if cached != cf.md5_hex:
            # payload changed outside put_cloud_file; trust the bytes
            logger.warning(
                "digest index stale for %s/%s (index %s, content %s)",
                container, filename, cached, cf.md5_hex,
            )
        return cf

    def exists(self, container: str, filename: str) -> bool:
        return self._path(container, filename).is_file()

    def list_container(self, container: str) -> list[str]:
        d = self.objects_dir / container
        if not d.is_dir():
            return []
        return sorted(p.name for p in d.iterdir() if p.is_file() and not p.name.startswith("."))

    def containers(self) -> list[str]:
        return sorted(p.name for p in self.objects_dir.iterdir() if p.is_dir())
