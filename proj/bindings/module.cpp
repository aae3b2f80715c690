#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hyperscat/partitions.hpp"
#include "hyperscat/version.hpp"

namespace py = pybind11;
using namespace hyperscat;

PYBIND11_MODULE(_core, m) {
    m.doc() = "Weak asymptotics of N-particle scattering: core numerical routines";
    m.attr("__version__") = version_string;

    using partitions::Partition;
    using partitions::PartitionChain;

    py::class_<Partition>(m, "Partition")
        .def(py::init<int, std::vector<std::vector<int>>>(), py::arg("n"), py::arg("blocks"))
        .def_property_readonly("n", &Partition::n)
        .def_property_readonly("num_blocks", &Partition::num_blocks)
        .def_property_readonly("blocks", &Partition::blocks)
        .def("__str__", &Partition::str)
        .def("__repr__", [](const Partition& p) { return "Partition('" + p.str() + "')"; })
        .def("__eq__", [](const Partition& a, const Partition& b) { return a == b; });

    py::class_<PartitionChain>(m, "PartitionChain")
        .def_property_readonly("n", &PartitionChain::n)
        .def_property_readonly("links", &PartitionChain::links)
        .def("level", &PartitionChain::level, py::arg("l"))
        .def("__str__", &PartitionChain::str);

    m.def("enumerate_partitions", &partitions::enumerate_partitions, py::arg("n"), py::arg("k"));
    m.def("enumerate_chains", &partitions::enumerate_chains, py::arg("n"));
    m.def("chain_count_formula", &partitions::chain_count_formula, py::arg("n"));
    m.def("refines", &partitions::refines, py::arg("fine"), py::arg("coarse"));
}
